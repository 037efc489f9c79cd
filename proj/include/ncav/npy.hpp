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

// Minimal reader/writer for the NumPy .npy format (versions 1.0 and 2.0 on
// read, 1.0 on write). Only little-endian, C-order `<f4` and `<i8` arrays
// are supported.

#ifndef NCAV_NPY_HPP_
#define NCAV_NPY_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ncav::npy {

struct Header {
  std::string descr;            // e.g. "<f4"
  bool fortran_order = false;
  std::vector<std::size_t> shape;
  std::size_t data_offset = 0;  // bytes from start of file to first element

  std::size_t element_count() const;
};

// Reads only the header. Throws kMissingFile / kMalformedArtifact.
Header ReadHeader(const std::filesystem::path& path);

std::vector<float> ReadFloat32(const std::filesystem::path& path,
                               std::vector<std::size_t>* shape);
std::vector<std::int64_t> ReadInt64(const std::filesystem::path& path,
                                    std::vector<std::size_t>* shape);

void WriteFloat32(const std::filesystem::path& path,
                  std::span<const float> data,
                  std::span<const std::size_t> shape);
void WriteInt64(const std::filesystem::path& path,
                std::span<const std::int64_t> data,
                std::span<const std::size_t> shape);

// Header dictionary text exactly as numpy would emit it, without padding.
std::string FormatHeaderDict(const std::string& descr,
                             std::span<const std::size_t> shape);

}  // namespace ncav::npy

#endif  // NCAV_NPY_HPP_
