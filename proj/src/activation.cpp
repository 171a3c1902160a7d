#include "cola/activation.hpp"

#include <cmath>
#include <stdexcept>

namespace cola {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

const std::array<ActivationInfo, 4>& activation_registry() {
    static const std::array<ActivationInfo, 4> registry{{
        {ActivationKind::Identity, "identity", 1.0, 0.0},
        {ActivationKind::SiLU, "silu", 0.5, 0.5},
        {ActivationKind::GELU, "gelu", 0.5, 2.0 * kInvSqrt2Pi},
        {ActivationKind::Tanh, "tanh", 1.0, 0.0},
    }};
    return registry;
}

const ActivationInfo& activation_info(ActivationKind kind) {
    for (const auto& info : activation_registry()) {
        if (info.kind == kind) return info;
    }
    throw std::invalid_argument("unregistered activation");
}

ActivationKind activation_from_name(std::string_view name) {
    for (const auto& info : activation_registry()) {
        if (info.name == name) return info.kind;
    }
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(ActivationKind kind) { return activation_info(kind).name; }

double activate(ActivationKind kind, double x) {
    switch (kind) {
        case ActivationKind::Identity:
            return x;
        case ActivationKind::SiLU:
            return x / (1.0 + std::exp(-x));
        case ActivationKind::GELU:
            return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
        case ActivationKind::Tanh:
            return std::tanh(x);
    }
    return x;
}

double activate_grad(ActivationKind kind, double x) {
    switch (kind) {
        case ActivationKind::Identity:
            return 1.0;
        case ActivationKind::SiLU: {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        }
        case ActivationKind::GELU:
            return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        case ActivationKind::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

}  // namespace cola
