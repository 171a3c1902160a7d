#include "cola/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cola {

namespace {

static_assert(sizeof(double) == 8);

void put_f64(std::ostream& os, const Tensor& t) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * 8));
    } else {
        for (double v : t.data()) {
            auto bits = __builtin_bswap64(std::bit_cast<std::uint64_t>(v));
            os.write(reinterpret_cast<const char*>(&bits), 8);
        }
    }
}

void get_f64(std::istream& is, Tensor& t) {
    is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * 8));
    if (!is) throw FormatError("truncated tensor payload");
    if constexpr (std::endian::native != std::endian::little) {
        for (double& v : t.data()) v = std::bit_cast<double>(__builtin_bswap64(std::bit_cast<std::uint64_t>(v)));
    }
}

std::string read_line(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("unexpected end of file");
    return line;
}

}  // namespace

void write_tensor_file(std::ostream& os, const std::string& magic, const std::string& text,
                       const std::vector<NamedTensor>& tensors) {
    os << magic << '\n' << "text " << text.size() << '\n' << text;
    os << "tensors " << tensors.size() << '\n';
    for (const auto& t : tensors) {
        os << t.name << ' ' << t.value.rank();
        for (auto e : t.value.shape()) os << ' ' << e;
        os << '\n';
        put_f64(os, t.value);
    }
    if (!os) throw std::runtime_error("write failed");
}

void read_tensor_file(std::istream& is, const std::string& magic, std::string& text,
                      std::vector<NamedTensor>& tensors) {
    if (read_line(is) != magic) throw FormatError("bad magic; expected " + magic);
    std::istringstream th(read_line(is));
    std::string word;
    std::size_t bytes = 0;
    if (!(th >> word >> bytes) || word != "text") throw FormatError("missing text block header");
    text.assign(bytes, '\0');
    is.read(text.data(), static_cast<std::streamsize>(bytes));
    if (!is) throw FormatError("truncated text block");
    std::istringstream tc(read_line(is));
    std::size_t count = 0;
    if (!(tc >> word >> count) || word != "tensors") throw FormatError("missing tensor count");
    tensors.clear();
    for (std::size_t i = 0; i < count; ++i) {
        std::istringstream h(read_line(is));
        NamedTensor nt;
        std::size_t rank = 0;
        if (!(h >> nt.name >> rank)) throw FormatError("bad tensor header");
        Shape shape(rank);
        for (auto& e : shape)
            if (!(h >> e)) throw FormatError("bad shape for " + nt.name);
        nt.value = Tensor(shape);
        get_f64(is, nt.value);
        tensors.push_back(std::move(nt));
    }
}

std::map<std::string, std::string> parse_kv_lines(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("bad key=value line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

void save_model(const LanguageModel& model, std::ostream& os) {
    std::vector<NamedTensor> ts;
    for (const auto& p : model.parameters()) ts.push_back({p.name, p.value});
    write_tensor_file(os, kModelMagic, model.config().to_kv(), ts);
}

void save_model(const LanguageModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    save_model(model, os);
}

LanguageModel load_model(std::istream& is) {
    std::string text;
    std::vector<NamedTensor> ts;
    read_tensor_file(is, kModelMagic, text, ts);
    LanguageModel model(ModelConfig::from_kv(parse_kv_lines(text)));
    auto& ps = model.parameters();
    if (ts.size() != ps.size()) {
        throw FormatError("checkpoint holds " + std::to_string(ts.size()) + " tensors, model expects " +
                          std::to_string(ps.size()));
    }
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i].name != ps[i].name) throw FormatError("tensor " + ts[i].name + " where " + ps[i].name + " expected");
        if (ts[i].value.shape() != ps[i].value.shape()) throw FormatError("shape mismatch for " + ps[i].name);
        ps[i].value = std::move(ts[i].value);
    }
    return model;
}

LanguageModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    return load_model(is);
}

}  // namespace cola
