/*
 * Copyright 2026 The ncav Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ncav/npy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include "ncav/error.hpp"

namespace ncav::npy {

static_assert(std::endian::native == std::endian::little,
              "npy I/O assumes a little-endian host");

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

std::string ReadAll(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    Fail(ErrorCode::kMissingFile, "no such file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

[[noreturn]] void Malformed(const std::filesystem::path& path,
                            const std::string& what) {
  Fail(ErrorCode::kMalformedArtifact, path.string() + ": " + what);
}

Header ParseHeader(const std::filesystem::path& path, std::string_view raw) {
  if (raw.size() < kMagicLen + 4 ||
      std::memcmp(raw.data(), kMagic, kMagicLen) != 0) {
    Malformed(path, "missing NPY magic");
  }
  const auto major = static_cast<unsigned char>(raw[6]);
  std::size_t header_len = 0;
  std::size_t prefix = 0;
  if (major == 1) {
    std::uint16_t len;
    std::memcpy(&len, raw.data() + 8, sizeof(len));
    header_len = len;
    prefix = 10;
  } else if (major == 2) {
    if (raw.size() < 12) Malformed(path, "truncated header");
    std::uint32_t len;
    std::memcpy(&len, raw.data() + 8, sizeof(len));
    header_len = len;
    prefix = 12;
  } else {
    Malformed(path, "unsupported NPY version " + std::to_string(major));
  }
  if (raw.size() < prefix + header_len) Malformed(path, "truncated header");
  const std::string dict(raw.substr(prefix, header_len));

  Header header;
  header.data_offset = prefix + header_len;

  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex fortran_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  std::smatch m;
  if (!std::regex_search(dict, m, descr_re)) Malformed(path, "no descr");
  header.descr = m[1];
  if (!std::regex_search(dict, m, fortran_re)) {
    Malformed(path, "no fortran_order");
  }
  header.fortran_order = m[1] == "True";
  if (!std::regex_search(dict, m, shape_re)) Malformed(path, "no shape");
  const std::string dims = m[1];
  static const std::regex dim_re(R"(\d+)");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), dim_re);
       it != std::sregex_iterator(); ++it) {
    header.shape.push_back(std::stoull(it->str()));
  }
  return header;
}

template <typename T>
std::vector<T> ReadTyped(const std::filesystem::path& path,
                         const std::string& descr,
                         std::vector<std::size_t>* shape) {
  const std::string raw = ReadAll(path);
  const Header header = ParseHeader(path, raw);
  if (header.descr != descr) {
    Malformed(path, "expected dtype " + descr + ", found " + header.descr);
  }
  if (header.fortran_order) Malformed(path, "Fortran-order arrays unsupported");
  const std::size_t count = header.element_count();
  if (raw.size() - header.data_offset != count * sizeof(T)) {
    Malformed(path, "payload holds " +
                        std::to_string(raw.size() - header.data_offset) +
                        " bytes, shape needs " +
                        std::to_string(count * sizeof(T)));
  }
  std::vector<T> out(count);
  if (count > 0) {
    std::memcpy(out.data(), raw.data() + header.data_offset, count * sizeof(T));
  }
  if (shape != nullptr) *shape = header.shape;
  return out;
}

template <typename T>
void WriteTyped(const std::filesystem::path& path, const std::string& descr,
                std::span<const T> data, std::span<const std::size_t> shape) {
  std::size_t count = 1;
  for (std::size_t d : shape) count *= d;
  if (count != data.size()) {
    Fail(ErrorCode::kShapeMismatch, "npy write of " + path.string() +
                                        ": shape does not match data size");
  }
  std::string dict = FormatHeaderDict(descr, shape);
  // Pad so that magic + version + length + dict + '\n' is a multiple of 64.
  const std::size_t unpadded = 10 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict.push_back('\n');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kMagic, kMagicLen);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(dict.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size_bytes()));
  if (!out) Fail(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace

std::size_t Header::element_count() const {
  std::size_t count = 1;
  for (std::size_t d : shape) count *= d;
  return count;
}

Header ReadHeader(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    Fail(ErrorCode::kMissingFile, "no such file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string prefix(12, '\0');
  in.read(prefix.data(), 12);
  prefix.resize(static_cast<std::size_t>(in.gcount()));
  if (prefix.size() < 10) Malformed(path, "truncated header");
  std::size_t header_len = 0;
  std::size_t start = 10;
  if (static_cast<unsigned char>(prefix[6]) == 2 && prefix.size() == 12) {
    std::uint32_t len;
    std::memcpy(&len, prefix.data() + 8, sizeof(len));
    header_len = len;
    start = 12;
  } else {
    std::uint16_t len;
    std::memcpy(&len, prefix.data() + 8, sizeof(len));
    header_len = len;
  }
  std::string raw(start + header_len, '\0');
  in.seekg(0);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  raw.resize(static_cast<std::size_t>(in.gcount()));
  return ParseHeader(path, raw);
}

std::vector<float> ReadFloat32(const std::filesystem::path& path,
                               std::vector<std::size_t>* shape) {
  return ReadTyped<float>(path, "<f4", shape);
}

std::vector<std::int64_t> ReadInt64(const std::filesystem::path& path,
                                    std::vector<std::size_t>* shape) {
  return ReadTyped<std::int64_t>(path, "<i8", shape);
}

void WriteFloat32(const std::filesystem::path& path,
                  std::span<const float> data,
                  std::span<const std::size_t> shape) {
  WriteTyped<float>(path, "<f4", data, shape);
}

void WriteInt64(const std::filesystem::path& path,
                std::span<const std::int64_t> data,
                std::span<const std::size_t> shape) {
  WriteTyped<std::int64_t>(path, "<i8", data, shape);
}

std::string FormatHeaderDict(const std::string& descr,
                             std::span<const std::size_t> shape) {
  std::string dims;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) dims += ", ";
    dims += std::to_string(shape[i]);
  }
  if (shape.size() == 1) dims += ",";
  return "{'descr': '" + descr + "', 'fortran_order': False, 'shape': (" +
         dims + "), }";
}

}  // namespace ncav::npy
