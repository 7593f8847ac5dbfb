/*
 * Copyright 2026 The pillardet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace pillardet {

// Values mirror pd_status in the C header.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kIo = 2,
  kParse = 3,
  kOutOfRange = 4,
  kShapeMismatch = 5,
  kInvariant = 6,
  kInternal = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

inline void append(std::ostringstream&) {}

template <typename T, typename... Rest>
void append(std::ostringstream& os, const T& head, const Rest&... rest) {
  os << head;
  append(os, rest...);
}

}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(ErrorCode code, const Args&... parts) {
  std::ostringstream os;
  detail::append(os, parts...);
  throw Error(code, os.str());
}

#define PD_CHECK(cond, code, ...)                 \
  do {                                            \
    if (!(cond)) ::pillardet::fail(code, __VA_ARGS__); \
  } while (0)

}  // namespace pillardet
