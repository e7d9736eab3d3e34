#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace remtkd {

// Error taxonomy. Each failure mode gets its own type so callers (and the CLI)
// can produce a distinct diagnostic.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct SizeError : Error {
  using Error::Error;
};
struct PlacementError : Error {
  using Error::Error;
};
struct StorageError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ChecksumError : Error {
  using Error::Error;
};
struct UndefinedMetricError : Error {
  using Error::Error;
};

enum class ForgeryType : std::uint8_t { authentic, copy_move, splicing, inpainting, multi };

inline constexpr ForgeryType kAllForgeryTypes[] = {ForgeryType::authentic, ForgeryType::copy_move,
                                                   ForgeryType::splicing, ForgeryType::inpainting,
                                                   ForgeryType::multi};
inline constexpr ForgeryType kTamperTypes[] = {ForgeryType::copy_move, ForgeryType::splicing,
                                               ForgeryType::inpainting, ForgeryType::multi};
inline constexpr ForgeryType kTeacherTypes[] = {ForgeryType::copy_move, ForgeryType::splicing,
                                                ForgeryType::inpainting};

std::string_view to_string(ForgeryType t);
ForgeryType forgery_type_from_string(std::string_view s);

}  // namespace remtkd
