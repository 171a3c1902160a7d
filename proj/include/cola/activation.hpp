#pragma once

#include <array>
#include <string>
#include <string_view>

namespace cola {

enum class ActivationKind { Identity, SiLU, GELU, Tanh };

// Named registry of elementwise nonlinearities. All registered entries
// satisfy sigma(0) = 0; the theory checks additionally select on sigma'(0)
// and sigma''(0).
struct ActivationInfo {
    ActivationKind kind;
    std::string_view name;
    double d1_at_zero;  // sigma'(0)
    double d2_at_zero;  // sigma''(0)
};

const std::array<ActivationInfo, 4>& activation_registry();
const ActivationInfo& activation_info(ActivationKind kind);
ActivationKind activation_from_name(std::string_view name);
std::string_view activation_name(ActivationKind kind);

double activate(ActivationKind kind, double x);
double activate_grad(ActivationKind kind, double x);

}  // namespace cola
