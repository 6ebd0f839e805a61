// ENVI-compatible storage for cubes and label maps: a text .hdr describing
// samples/lines/bands/data type/interleave/byte order plus a headerless .raw
// payload. Cubes carry a wavelength list, label maps a class-name list.

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "beltscan/error.hpp"
#include "beltscan/hypercube.hpp"

static_assert(std::endian::native == std::endian::little,
              "raw payloads are written little-endian (byte order = 0)");

namespace beltscan {

namespace {

constexpr int kEnviFloat32 = 4;
constexpr int kEnviUint8 = 1;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::filesystem::path header_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p.replace_extension(".hdr");
  return p;
}

std::filesystem::path raw_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p.replace_extension(".raw");
  return p;
}

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(12);
  out << v;
  return out.str();
}

// Key/value view of a header file; flattens brace lists onto one line.
std::map<std::string, std::string> parse_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open header: " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "ENVI") {
    throw DataError("malformed header (missing ENVI magic): " + path.string());
  }
  std::map<std::string, std::string> keys;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == ';') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("malformed header line '" + line + "' in " + path.string());
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!value.empty() && value.front() == '{') {
      while (value.find('}') == std::string::npos) {
        std::string more;
        if (!std::getline(in, more)) {
          throw DataError("unterminated list for key '" + key + "' in " +
                          path.string());
        }
        value += " " + trim(more);
      }
      value = trim(value.substr(1, value.find('}') - 1));
    }
    keys[key] = value;
  }
  return keys;
}

int require_int(const std::map<std::string, std::string>& keys,
                const std::string& key, const std::filesystem::path& path) {
  auto it = keys.find(key);
  if (it == keys.end()) {
    throw DataError("header missing key '" + key + "': " + path.string());
  }
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw DataError("header key '" + key + "' is not an integer: " + path.string());
  }
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

void check_common(const std::map<std::string, std::string>& keys,
                  const std::filesystem::path& hdr, int expected_type) {
  const int data_type = require_int(keys, "data type", hdr);
  if (data_type != expected_type) {
    std::ostringstream msg;
    msg << "unsupported data type " << data_type << " (expected " << expected_type
        << "): " << hdr.string();
    throw DataError(msg.str());
  }
  auto interleave = keys.find("interleave");
  if (interleave == keys.end() || interleave->second != "bip") {
    throw DataError("unsupported interleave (only bip): " + hdr.string());
  }
  if (require_int(keys, "byte order", hdr) != 0) {
    throw DataError("unsupported byte order (only little-endian): " + hdr.string());
  }
}

template <typename T>
std::vector<T> read_raw(const std::filesystem::path& raw, std::int64_t expected) {
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw DataError("cannot open raw file: " + raw.string());
  in.seekg(0, std::ios::end);
  const std::int64_t bytes = in.tellg();
  const std::int64_t want = expected * static_cast<std::int64_t>(sizeof(T));
  if (bytes != want) {
    std::ostringstream msg;
    msg << "raw size mismatch: " << raw.string() << " holds " << bytes
        << " bytes, header declares " << want;
    throw DataError(msg.str());
  }
  std::vector<T> data(static_cast<std::size_t>(expected));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()), want);
  if (!in) throw DataError("short read from raw file: " + raw.string());
  return data;
}

template <typename T>
void write_raw(const std::filesystem::path& raw, const std::vector<T>& data) {
  std::ofstream out(raw, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write raw file: " + raw.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (!out) throw DataError("short write to raw file: " + raw.string());
}

}  // namespace

void save_cube(const HyperCube& cube, const std::filesystem::path& path) {
  if (cube.value_count() != static_cast<std::int64_t>(cube.data.size())) {
    throw DataError("cube data size does not match its dimensions");
  }
  if (!cube.all_finite()) {
    throw DataError("refusing to save cube with non-finite values");
  }
  const std::filesystem::path hdr = header_path(path);
  std::ofstream out(hdr);
  if (!out) throw DataError("cannot write header: " + hdr.string());
  out << "ENVI\n";
  out << "samples = " << cube.width << "\n";
  out << "lines = " << cube.height << "\n";
  out << "bands = " << cube.bands << "\n";
  out << "data type = " << kEnviFloat32 << "\n";
  out << "interleave = bip\n";
  out << "byte order = 0\n";
  out << "wavelength = {\n";
  // The stored list covers exactly the bands present: full sensor lattice for
  // raw cubes, the retained window otherwise.
  const bool raw_cube = cube.bands == cube.grid.sensor_bands;
  for (int b = 0; b < cube.bands; ++b) {
    const double wl = raw_cube
                          ? cube.grid.origin_nm + cube.grid.step_nm * b
                          : cube.grid.wavelength_nm(b);
    out << format_number(wl) << (b + 1 < cube.bands ? ",\n" : "\n");
  }
  out << "}\n";
  if (!out) throw DataError("short write to header: " + hdr.string());
  write_raw(raw_path(path), cube.data);
}

HyperCube load_cube(const std::filesystem::path& path) {
  const std::filesystem::path hdr = header_path(path);
  auto keys = parse_header(hdr);
  check_common(keys, hdr, kEnviFloat32);
  const int samples = require_int(keys, "samples", hdr);
  const int lines = require_int(keys, "lines", hdr);
  const int bands = require_int(keys, "bands", hdr);
  if (samples <= 0 || lines <= 0 || bands <= 0) {
    throw DataError("non-positive dimensions in header: " + hdr.string());
  }
  auto wl_it = keys.find("wavelength");
  if (wl_it == keys.end()) {
    throw DataError("header missing wavelength list: " + hdr.string());
  }
  const std::vector<std::string> wl_strings = split_list(wl_it->second);
  if (static_cast<int>(wl_strings.size()) != bands) {
    throw DataError("wavelength list length does not match bands: " + hdr.string());
  }
  std::vector<double> wl(wl_strings.size());
  for (std::size_t i = 0; i < wl_strings.size(); ++i) {
    try {
      wl[i] = std::stod(wl_strings[i]);
    } catch (const std::exception&) {
      throw DataError("bad wavelength entry '" + wl_strings[i] + "' in " +
                      hdr.string());
    }
  }
  WavelengthGrid grid;
  if (bands > 1) {
    const double step = wl[1] - wl[0];
    if (step <= 0) throw DataError("wavelengths not increasing: " + hdr.string());
    for (int b = 0; b < bands; ++b) {
      if (std::abs(wl[b] - (wl[0] + step * b)) > 1e-6 * std::max(1.0, wl[b])) {
        throw DataError("wavelengths are not a uniform lattice: " + hdr.string());
      }
    }
    grid.step_nm = step;
  }
  if (bands == grid.sensor_bands) {
    grid.origin_nm = wl[0];
  } else {
    // Stored cube is a retained window; reconstruct the sensor lattice under
    // the default skip convention.
    grid.origin_nm = wl[0] - grid.step_nm * grid.skip_head;
    grid.sensor_bands = bands + grid.skip_head + grid.skip_tail;
  }

  HyperCube cube;
  cube.height = lines;
  cube.width = samples;
  cube.bands = bands;
  cube.grid = grid;
  cube.data = read_raw<float>(raw_path(path), cube.value_count());
  if (!cube.all_finite()) {
    throw DataError("cube contains non-finite values: " + raw_path(path).string());
  }
  return cube;
}

void save_labels(const LabelMap& labels, const std::filesystem::path& path) {
  if (labels.labels.size() !=
      static_cast<std::size_t>(labels.height) * labels.width) {
    throw DataError("label data size does not match its dimensions");
  }
  for (std::uint8_t v : labels.labels) {
    if (v >= kNumClasses) throw DataError("label value out of class range");
  }
  const std::filesystem::path hdr = header_path(path);
  std::ofstream out(hdr);
  if (!out) throw DataError("cannot write header: " + hdr.string());
  out << "ENVI\n";
  out << "samples = " << labels.width << "\n";
  out << "lines = " << labels.height << "\n";
  out << "bands = 1\n";
  out << "data type = " << kEnviUint8 << "\n";
  out << "interleave = bip\n";
  out << "byte order = 0\n";
  out << "classes = {";
  for (int c = 0; c < kNumClasses; ++c) {
    out << class_name(static_cast<std::uint8_t>(c)) << (c + 1 < kNumClasses ? ", " : "");
  }
  out << "}\n";
  if (!out) throw DataError("short write to header: " + hdr.string());
  write_raw(raw_path(path), labels.labels);
}

LabelMap load_labels(const std::filesystem::path& path) {
  const std::filesystem::path hdr = header_path(path);
  auto keys = parse_header(hdr);
  check_common(keys, hdr, kEnviUint8);
  const int samples = require_int(keys, "samples", hdr);
  const int lines = require_int(keys, "lines", hdr);
  if (require_int(keys, "bands", hdr) != 1) {
    throw DataError("label map must have exactly one band: " + hdr.string());
  }
  auto classes = keys.find("classes");
  if (classes == keys.end()) {
    throw DataError("label header missing classes list: " + hdr.string());
  }
  const std::vector<std::string> names = split_list(classes->second);
  if (static_cast<int>(names.size()) != kNumClasses) {
    throw DataError("label header must list all 13 classes: " + hdr.string());
  }
  for (int c = 0; c < kNumClasses; ++c) {
    if (names[c] != class_name(static_cast<std::uint8_t>(c))) {
      throw DataError("class list does not match code order: " + hdr.string());
    }
  }
  LabelMap map;
  map.height = lines;
  map.width = samples;
  map.labels = read_raw<std::uint8_t>(
      raw_path(path), static_cast<std::int64_t>(lines) * samples);
  for (std::uint8_t v : map.labels) {
    if (v >= kNumClasses) {
      throw DataError("label value out of class range: " + raw_path(path).string());
    }
  }
  return map;
}

}  // namespace beltscan
