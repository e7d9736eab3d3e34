#include "remtkd/common.hpp"

#include "remtkd/tensor.hpp"

namespace remtkd {

std::string_view to_string(ForgeryType t) {
  switch (t) {
    case ForgeryType::authentic: return "authentic";
    case ForgeryType::copy_move: return "copy_move";
    case ForgeryType::splicing: return "splicing";
    case ForgeryType::inpainting: return "inpainting";
    case ForgeryType::multi: return "multi";
  }
  return "?";
}

ForgeryType forgery_type_from_string(std::string_view s) {
  for (auto t : kAllForgeryTypes)
    if (to_string(t) == s) return t;
  throw ConfigError("unknown forgery type: " + std::string(s));
}

std::string shape_str(const Shape& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "}";
}

}  // namespace remtkd
