#include "ceuler/field_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ceuler {
namespace {

constexpr char kMagic[8] = {'C', 'E', 'U', 'F', 'I', 'E', 'L', 'D'};

static_assert(std::endian::native == std::endian::little,
              "field container writer assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw InvalidArgument("truncated field container");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

bool bitwise_zero(double v) { return std::bit_cast<std::uint64_t>(v) == 0; }

Rank rank_from(std::uint32_t r) {
  if (r == 1) return Rank::scalar;
  if (r == 3) return Rank::vector;
  throw InvalidArgument("field container: invalid rank " + std::to_string(r));
}

struct Record {
  Frequency m;
  int component;
  double a, b;
};

std::vector<Record> records_of(const Field& f) {
  std::vector<Record> out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (int c = 0; c < f.components(); ++c) {
      const double a = f.cos_coefficients()(i, c);
      const double b = f.sin_coefficients()(i, c);
      if (bitwise_zero(a) && bitwise_zero(b)) continue;
      out.push_back({f.table()[i], c, a, b});
    }
  }
  return out;
}

void store(Field& f, const Record& r) {
  if (!r.m.is_canonical()) throw InvalidArgument("field container: non-canonical frequency " + r.m.to_string());
  if (r.component < 0 || r.component >= f.components())
    throw InvalidArgument("field container: component out of range");
  auto slot = f.table().locate(r.m);
  if (slot.index < 0) throw ResolutionError("field container: frequency " + r.m.to_string() + " outside resolution");
  f.cos_coefficients()(slot.index, r.component) = r.a;
  f.sin_coefficients()(slot.index, r.component) = r.b;
}

}  // namespace

std::vector<std::uint8_t> encode_binary(const Field& f) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put<std::uint32_t>(out, kFieldFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.components()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.resolution()));
  const auto recs = records_of(f);
  put<std::uint64_t>(out, recs.size());
  for (const auto& r : recs) {
    for (int k = 0; k < 3; ++k) put<std::int32_t>(out, r.m[k]);
    put<std::int32_t>(out, r.component + 1);
    put<double>(out, r.a);
    put<double>(out, r.b);
  }
  return out;
}

Field decode_binary(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw InvalidArgument("not a field container");
  std::size_t pos = 8;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kFieldFormatVersion) throw InvalidArgument("unsupported field container version");
  const Rank rank = rank_from(get<std::uint32_t>(bytes, pos));
  const auto resolution = get<std::uint32_t>(bytes, pos);
  const auto count = get<std::uint64_t>(bytes, pos);
  Field f(rank, static_cast<int>(resolution));
  for (std::uint64_t k = 0; k < count; ++k) {
    Record r;
    for (int a = 0; a < 3; ++a) r.m[a] = get<std::int32_t>(bytes, pos);
    r.component = get<std::int32_t>(bytes, pos) - 1;
    r.a = get<double>(bytes, pos);
    r.b = get<double>(bytes, pos);
    store(f, r);
  }
  if (pos != bytes.size()) throw InvalidArgument("trailing bytes in field container");
  return f;
}

nlohmann::json to_json(const Field& f) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : records_of(f)) records.push_back({r.m[0], r.m[1], r.m[2], r.component + 1, r.a, r.b});
  return {{"format", "ceuler-field"},
          {"version", kFieldFormatVersion},
          {"rank", f.components()},
          {"resolution", f.resolution()},
          {"records", records}};
}

Field field_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "ceuler-field") throw InvalidArgument("not a field container");
    if (j.at("version").get<std::uint32_t>() != kFieldFormatVersion)
      throw InvalidArgument("unsupported field container version");
    Field f(rank_from(j.at("rank").get<std::uint32_t>()), j.at("resolution").get<int>());
    for (const auto& rec : j.at("records")) {
      if (rec.size() != 6) throw InvalidArgument("field record must have 6 entries");
      store(f, {Frequency(rec[0].get<int>(), rec[1].get<int>(), rec[2].get<int>()), rec[3].get<int>() - 1,
                rec[4].get<double>(), rec[5].get<double>()});
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed field JSON: ") + e.what());
  }
}

void write_binary_file(const std::string& path, const Field& f) {
  const auto bytes = encode_binary(f);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Field read_binary_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_binary(bytes);
}

}  // namespace ceuler
