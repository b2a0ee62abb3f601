//
// Copyright 2026 The crowdcount Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef CROWDCOUNT_CSV_H_
#define CROWDCOUNT_CSV_H_

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace crowdcount {

// Shortest decimal representation that parses back to the identical double.
// Keeps CSV and JSON outputs byte-stable and exactly round-trippable.
inline std::string FormatDouble(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) {
    throw std::runtime_error("double formatting failed");
  }
  return std::string(buf, ptr);
}

inline double ParseDouble(std::string_view text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a number: " + std::string(text));
  }
  return value;
}

inline std::int64_t ParseInt64(std::string_view text) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("not an integer: " + std::string(text));
  }
  return value;
}

// Splits one CSV line of the fixed schemas used here. Fields are never
// quoted; identifiers are validated against separators when configured.
inline std::vector<std::string_view> SplitCsvLine(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

// True for identifiers safe to embed in unquoted CSV fields.
inline bool IsCsvSafeIdentifier(std::string_view id) {
  if (id.empty()) {
    return false;
  }
  for (char c : id) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') {
      return false;
    }
  }
  return true;
}

}  // namespace crowdcount

#endif  // CROWDCOUNT_CSV_H_
