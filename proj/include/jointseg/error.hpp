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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace jointseg
{
// Exit-code category carried by every library error; the CLI maps it 1:1 to
// its process exit status.
enum class ErrorCategory : int
{
  kDimension = 2,
  kContract = 3,
  kParse = 4,
  kConfig = 5,
  kCheckpoint = 6,
  kGeneration = 7,
  kIo = 8,
};

class Error : public std::runtime_error
{
public:
  Error(ErrorCategory category, const std::string & what)
  : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept {return category_;}

private:
  ErrorCategory category_;
};

class DimensionError : public Error
{
public:
  explicit DimensionError(const std::string & what)
  : Error(ErrorCategory::kDimension, "dimension error: " + what) {}
};

class ContractError : public Error
{
public:
  explicit ContractError(const std::string & what)
  : Error(ErrorCategory::kContract, "contract error: " + what) {}
};

class ParseError : public Error
{
public:
  ParseError(const std::string & what, std::size_t byte_offset)
  : Error(ErrorCategory::kParse,
      "parse error at byte " + std::to_string(byte_offset) + ": " + what),
    byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept {return byte_offset_;}

private:
  std::size_t byte_offset_;
};

class ConfigError : public Error
{
public:
  explicit ConfigError(const std::string & what)
  : Error(ErrorCategory::kConfig, "config error: " + what) {}
};

class CheckpointError : public Error
{
public:
  explicit CheckpointError(const std::string & what)
  : Error(ErrorCategory::kCheckpoint, "checkpoint error: " + what) {}
};

class GenerationError : public Error
{
public:
  explicit GenerationError(const std::string & what)
  : Error(ErrorCategory::kGeneration, "generation error: " + what) {}
};

class IoError : public Error
{
public:
  explicit IoError(const std::string & what)
  : Error(ErrorCategory::kIo, "io error: " + what) {}
};

}  // namespace jointseg
