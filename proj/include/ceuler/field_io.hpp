#pragma once

// Self-describing field container.
//
// Binary layout (little-endian):
//   char[8]  magic "CEUFIELD"
//   uint32   version (1)
//   uint32   rank (1 or 3)
//   uint32   resolution M
//   uint64   record count
//   records: int32 m1, m2, m3, int32 component (1-based),
//            float64 cos amplitude, float64 sin amplitude
//
// Records are emitted for canonical frequencies whose amplitude pair is not
// bitwise zero, in table order. The JSON form carries the same header fields
// and a "records" array of [m1, m2, m3, component, cos, sin].

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ceuler/spectral_field.hpp"

namespace ceuler {

inline constexpr std::uint32_t kFieldFormatVersion = 1;

std::vector<std::uint8_t> encode_binary(const Field& f);
Field decode_binary(const std::vector<std::uint8_t>& bytes);

nlohmann::json to_json(const Field& f);
Field field_from_json(const nlohmann::json& j);

void write_binary_file(const std::string& path, const Field& f);
Field read_binary_file(const std::string& path);

}  // namespace ceuler
