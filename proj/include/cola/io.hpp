#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cola/model.hpp"

namespace cola {

class FormatError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

// Layout shared by model and trainer-state files:
//   <magic>\n
//   text <bytes>\n<key=value lines>
//   tensors <count>\n
//   per tensor: <name> <rank> <dim>...\n then little-endian float64 payload
void write_tensor_file(std::ostream& os, const std::string& magic, const std::string& text,
                       const std::vector<NamedTensor>& tensors);
void read_tensor_file(std::istream& is, const std::string& magic, std::string& text,
                      std::vector<NamedTensor>& tensors);

std::map<std::string, std::string> parse_kv_lines(const std::string& text);

inline constexpr const char* kModelMagic = "COLA1";

void save_model(const LanguageModel& model, const std::string& path);
void save_model(const LanguageModel& model, std::ostream& os);
LanguageModel load_model(const std::string& path);
LanguageModel load_model(std::istream& is);

}  // namespace cola
