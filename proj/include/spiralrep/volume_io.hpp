#pragma once

// MetaImage (.mhd + raw) volume ingestion and candidate CSV parsing.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spiralrep/error.hpp"
#include "spiralrep/geometry.hpp"
#include "spiralrep/text.hpp"

namespace spiralrep {

enum class ValueUnit { hu, normalized };

/// Dense scalar grid with world geometry. Storage is x-fastest.
struct Volume3D {
  Dims3 dims;
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin;
  std::vector<float> data;
  ValueUnit value_unit = ValueUnit::hu;

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return i + dims.x * (j + dims.y * k); }
  float at(std::size_t i, std::size_t j, std::size_t k) const { return data[index(i, j, k)]; }
  float& at(std::size_t i, std::size_t j, std::size_t k) { return data[index(i, j, k)]; }

  void validate() const {
    if (dims.x == 0 || dims.y == 0 || dims.z == 0)
      throw Error(ErrorCode::invalid_argument, "volume dims must be positive");
    if (data.size() != dims.count())
      throw Error(ErrorCode::size_mismatch, "volume data length " + std::to_string(data.size()) +
                                                " does not match dims product " + std::to_string(dims.count()));
    for (std::size_t a = 0; a < 3; ++a) {
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
        throw Error(ErrorCode::invalid_argument, "volume spacing must be strictly positive");
    }
  }
};

enum class ElementType { met_short, met_float };

inline const char* to_string(ElementType type) { return type == ElementType::met_short ? "MET_SHORT" : "MET_FLOAT"; }

/// Receives non-fatal header diagnostics (unknown keys and the like).
using WarningSink = std::function<void(const std::string&)>;

namespace detail {

inline bool parse_bool_value(std::string_view v) {
  v = text::trim(v);
  return v == "True" || v == "true" || v == "TRUE" || v == "1";
}

inline std::vector<double> parse_reals(std::string_view v, const std::string& key, std::size_t expected) {
  std::vector<double> out;
  for (auto tok : text::split_ws(v)) {
    auto d = text::parse_double(tok);
    if (!d) throw Error(ErrorCode::parse, "MetaImage key " + key + ": non-numeric value '" + std::string(tok) + "'");
    out.push_back(*d);
  }
  if (out.size() != expected)
    throw Error(ErrorCode::parse, "MetaImage key " + key + ": expected " + std::to_string(expected) + " values, got " +
                                      std::to_string(out.size()));
  return out;
}

template <typename T>
T byteswapped(T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <typename T>
void decode_elements(const std::vector<char>& raw, bool big_endian, std::vector<float>& out) {
  const bool swap = big_endian != (std::endian::native == std::endian::big);
  out.resize(raw.size() / sizeof(T));
  for (std::size_t n = 0; n < out.size(); ++n) {
    T v;
    std::memcpy(&v, raw.data() + n * sizeof(T), sizeof(T));
    if (swap) v = byteswapped(v);
    out[n] = static_cast<float>(v);
  }
}

}  // namespace detail

/// Loads a 3D MetaImage volume. Only uncompressed MET_SHORT / MET_FLOAT data
/// in a separate file, with an identity TransformMatrix, is accepted.
inline Volume3D load_metaimage(const std::filesystem::path& header_path, const WarningSink& warn = {}) {
  std::ifstream in(header_path);
  if (!in) throw Error(ErrorCode::io, "cannot open MetaImage header " + header_path.string());

  std::map<std::string, std::string> fields;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = text::trim(line);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::parse, header_path.string() + ":" + std::to_string(line_no) + ": expected 'Key = Value'");
    fields[std::string(text::trim(view.substr(0, eq)))] = std::string(text::trim(view.substr(eq + 1)));
  }

  static const char* const known[] = {"ObjectType",       "NDims",          "DimSize",
                                      "ElementType",      "ElementSpacing", "Offset",
                                      "Origin",           "Position",       "ElementByteOrderMSB",
                                      "BinaryDataByteOrderMSB", "BinaryData", "CompressedData",
                                      "TransformMatrix",  "ElementDataFile", "CenterOfRotation",
                                      "AnatomicalOrientation", "ElementNumberOfChannels", "ElementSize"};
  for (const auto& [key, value] : fields) {
    bool is_known = false;
    for (const char* k : known) is_known = is_known || key == k;
    if (!is_known && warn) warn("MetaImage: ignoring unknown key '" + key + "'");
  }

  auto require = [&](const char* key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw Error(ErrorCode::parse, std::string("MetaImage header missing required key ") + key);
    return it->second;
  };

  if (auto it = fields.find("ObjectType"); it != fields.end() && it->second != "Image")
    throw Error(ErrorCode::unsupported_format, "unsupported ObjectType '" + it->second + "'");

  const auto ndims = text::parse_int<int>(require("NDims"));
  if (!ndims) throw Error(ErrorCode::parse, "MetaImage NDims is not an integer");
  if (*ndims != 3)
    throw Error(ErrorCode::unsupported_dimensionality, "unsupported dimensionality: NDims = " + std::to_string(*ndims));

  if (auto it = fields.find("CompressedData"); it != fields.end() && detail::parse_bool_value(it->second))
    throw Error(ErrorCode::unsupported_format, "compressed MetaImage data is not supported");
  if (auto it = fields.find("ElementNumberOfChannels"); it != fields.end() && text::trim(it->second) != "1")
    throw Error(ErrorCode::unsupported_format, "multi-channel MetaImage data is not supported");
  if (auto it = fields.find("TransformMatrix"); it != fields.end()) {
    const auto m = detail::parse_reals(it->second, "TransformMatrix", 9);
    for (std::size_t n = 0; n < 9; ++n) {
      if (m[n] != ((n % 4 == 0) ? 1.0 : 0.0))
        throw Error(ErrorCode::unsupported_format, "non-identity TransformMatrix is not supported");
    }
  }

  const std::string& type_name = require("ElementType");
  ElementType type;
  if (type_name == "MET_SHORT")
    type = ElementType::met_short;
  else if (type_name == "MET_FLOAT")
    type = ElementType::met_float;
  else
    throw Error(ErrorCode::unsupported_element_type, "unsupported ElementType '" + type_name + "'");

  Volume3D vol;
  const auto dim_values = detail::parse_reals(require("DimSize"), "DimSize", 3);
  for (double d : dim_values) {
    if (d < 1.0 || d != std::floor(d)) throw Error(ErrorCode::parse, "MetaImage DimSize must be positive integers");
  }
  vol.dims = {static_cast<std::size_t>(dim_values[0]), static_cast<std::size_t>(dim_values[1]),
              static_cast<std::size_t>(dim_values[2])};

  if (auto it = fields.find("ElementSpacing"); it != fields.end()) {
    const auto s = detail::parse_reals(it->second, "ElementSpacing", 3);
    vol.spacing = {s[0], s[1], s[2]};
  }
  for (const char* key : {"Offset", "Origin", "Position"}) {
    if (auto it = fields.find(key); it != fields.end()) {
      const auto o = detail::parse_reals(it->second, key, 3);
      vol.origin = {o[0], o[1], o[2]};
      break;
    }
  }

  bool big_endian = false;
  if (auto it = fields.find("ElementByteOrderMSB"); it != fields.end())
    big_endian = detail::parse_bool_value(it->second);
  else if (auto it2 = fields.find("BinaryDataByteOrderMSB"); it2 != fields.end())
    big_endian = detail::parse_bool_value(it2->second);

  const std::string& data_file = require("ElementDataFile");
  if (data_file == "LOCAL" || data_file.rfind("LIST", 0) == 0 || data_file.find('%') != std::string::npos)
    throw Error(ErrorCode::unsupported_format, "ElementDataFile '" + data_file + "' is not supported");
  const auto raw_path = header_path.parent_path() / data_file;

  std::ifstream raw_in(raw_path, std::ios::binary);
  if (!raw_in) throw Error(ErrorCode::io, "cannot open MetaImage data file " + raw_path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(raw_in)), std::istreambuf_iterator<char>());

  const std::size_t element_size = type == ElementType::met_short ? sizeof(std::int16_t) : sizeof(float);
  const std::size_t expected = vol.dims.count() * element_size;
  if (raw.size() != expected)
    throw Error(ErrorCode::size_mismatch, "data file " + raw_path.string() + " has " + std::to_string(raw.size()) +
                                              " bytes, header implies " + std::to_string(expected));

  if (type == ElementType::met_short)
    detail::decode_elements<std::int16_t>(raw, big_endian, vol.data);
  else
    detail::decode_elements<float>(raw, big_endian, vol.data);

  vol.value_unit = ValueUnit::hu;
  vol.validate();
  return vol;
}

/// Writes `<header_path>` plus a sibling `<stem>.raw`. Used for fixtures and
/// round-trip tests; little-endian output.
inline void write_metaimage(const Volume3D& vol, const std::filesystem::path& header_path,
                            ElementType type = ElementType::met_float) {
  vol.validate();
  const auto raw_name = header_path.stem().string() + ".raw";
  const auto raw_path = header_path.parent_path() / raw_name;

  std::vector<char> raw;
  if (type == ElementType::met_short) {
    raw.resize(vol.data.size() * sizeof(std::int16_t));
    for (std::size_t n = 0; n < vol.data.size(); ++n) {
      const float v = vol.data[n];
      if (v != std::floor(v) || v < std::numeric_limits<std::int16_t>::min() ||
          v > std::numeric_limits<std::int16_t>::max())
        throw Error(ErrorCode::invalid_argument, "value " + std::to_string(v) + " is not representable as MET_SHORT");
      auto s = static_cast<std::int16_t>(v);
      if constexpr (std::endian::native == std::endian::big) s = detail::byteswapped(s);
      std::memcpy(raw.data() + n * sizeof(s), &s, sizeof(s));
    }
  } else {
    raw.resize(vol.data.size() * sizeof(float));
    for (std::size_t n = 0; n < vol.data.size(); ++n) {
      float v = vol.data[n];
      if constexpr (std::endian::native == std::endian::big) v = detail::byteswapped(v);
      std::memcpy(raw.data() + n * sizeof(v), &v, sizeof(v));
    }
  }

  std::ofstream raw_out(raw_path, std::ios::binary);
  if (!raw_out) throw Error(ErrorCode::io, "cannot write " + raw_path.string());
  raw_out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!raw_out) throw Error(ErrorCode::io, "write failed for " + raw_path.string());

  std::ofstream out(header_path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + header_path.string());
  out.precision(17);
  out << "ObjectType = Image\n"
      << "NDims = 3\n"
      << "BinaryData = True\n"
      << "ElementByteOrderMSB = False\n"
      << "CompressedData = False\n"
      << "TransformMatrix = 1 0 0 0 1 0 0 0 1\n"
      << "Offset = " << vol.origin.x << ' ' << vol.origin.y << ' ' << vol.origin.z << '\n'
      << "ElementSpacing = " << vol.spacing.x << ' ' << vol.spacing.y << ' ' << vol.spacing.z << '\n'
      << "DimSize = " << vol.dims.x << ' ' << vol.dims.y << ' ' << vol.dims.z << '\n'
      << "ElementType = " << to_string(type) << '\n'
      << "ElementDataFile = " << raw_name << '\n';
  if (!out) throw Error(ErrorCode::io, "write failed for " + header_path.string());
}

struct CandidateRecord {
  std::string scan_id;
  Vec3 world_pos;
  std::optional<int> label;  // 1 = nodule, 0 = non-nodule; absent in inference mode
};

/// Parses `seriesuid,coordX,coordY,coordZ[,class]`. The first line is a header.
/// Errors carry the 1-based file line number.
inline std::vector<CandidateRecord> load_candidates(const std::filesystem::path& csv_path, bool labeled) {
  std::ifstream in(csv_path);
  if (!in) throw Error(ErrorCode::io, "cannot open candidate file " + csv_path.string());

  const std::size_t columns = labeled ? 5 : 4;
  std::vector<CandidateRecord> out;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::parse, csv_path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };

  if (!std::getline(in, line)) fail("missing header row");
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = text::chomp_cr(line);
    if (text::trim(view).empty()) continue;
    const auto cols = text::split(view, ',');
    if (cols.size() != columns)
      fail("expected " + std::to_string(columns) + " columns, got " + std::to_string(cols.size()));

    CandidateRecord rec;
    rec.scan_id = std::string(text::trim(cols[0]));
    if (rec.scan_id.empty()) fail("empty seriesuid");
    for (std::size_t a = 0; a < 3; ++a) {
      auto v = text::parse_double(cols[a + 1]);
      if (!v) fail("non-numeric coordinate '" + std::string(cols[a + 1]) + "'");
      rec.world_pos[a] = *v;
    }
    if (labeled) {
      const auto label = text::trim(cols[4]);
      if (label == "0")
        rec.label = 0;
      else if (label == "1")
        rec.label = 1;
      else
        fail("label '" + std::string(label) + "' is not 0 or 1");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

/// Reads the header row and reports whether the file carries a class column.
inline bool candidates_have_labels(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw Error(ErrorCode::io, "cannot open candidate file " + csv_path.string());
  std::string header;
  std::getline(in, header);
  return text::split(text::chomp_cr(header), ',').size() == 5;
}

}  // namespace spiralrep
