// Copyright (c) 2026 The jointseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Little-endian byte packing shared by the scene and checkpoint containers.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstring>
#include <string>

#include "jointseg/error.hpp"

namespace jointseg::binary
{

template<typename U>
void put(std::string & out, U value)
{
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(U));
  }
  out.append(bytes, sizeof(U));
}

inline void put_string(std::string & out, const std::string & s)
{
  put<std::uint64_t>(out, s.size());
  out += s;
}

class Reader
{
public:
  explicit Reader(const std::string & data)
  : data_(data) {}

  template<typename U>
  U get(const char * what)
  {
    if (data_.size() - offset_ < sizeof(U)) {
      throw ParseError(std::string("truncated file while reading ") + what, offset_);
    }
    char bytes[sizeof(U)];
    std::memcpy(bytes, data_.data() + offset_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(bytes, bytes + sizeof(U));
    }
    U value;
    std::memcpy(&value, bytes, sizeof(U));
    offset_ += sizeof(U);
    return value;
  }

  std::string get_string(const char * what)
  {
    const auto n = get<std::uint64_t>(what);
    if (remaining() < n) {
      throw ParseError(std::string("truncated file while reading ") + what, offset_);
    }
    std::string s = data_.substr(offset_, n);
    offset_ += n;
    return s;
  }

  std::size_t offset() const {return offset_;}
  std::size_t remaining() const {return data_.size() - offset_;}

private:
  const std::string & data_;
  std::size_t offset_ = 0;
};

}  // namespace jointseg::binary
