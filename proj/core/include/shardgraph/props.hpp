#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace shardgraph {

// Property values: strings, numbers, vectors of numbers, or composite values
// (used among other things for meta-properties). Encoded as a one-byte type
// tag followed by a little-endian fixed-width payload or length-prefixed
// bytes; composites are length-prefixed concatenations.

struct PropValue;
using PropList = std::vector<PropValue>;

struct PropValue {
  std::variant<std::string, int64_t, double, std::vector<double>, PropList> v;

  PropValue() : v(std::string{}) {}
  PropValue(std::string s) : v(std::move(s)) {}
  PropValue(const char *s) : v(std::string(s)) {}
  PropValue(int64_t i) : v(i) {}
  PropValue(int i) : v(static_cast<int64_t>(i)) {}
  PropValue(double d) : v(d) {}
  PropValue(std::vector<double> d) : v(std::move(d)) {}
  PropValue(PropList c) : v(std::move(c)) {}

  friend bool operator==(const PropValue &, const PropValue &) = default;
};

void encode_prop_value(std::string &out, const PropValue &value);
// Decodes one value starting at `pos`, advancing it. Throws decode_error.
PropValue decode_prop_value(std::string_view bytes, size_t &pos);

std::string prop_value_to_string(const PropValue &value);

// A named property, as carried in wire payloads and loader rows.
struct NamedProp {
  std::string name;
  PropValue value;

  friend bool operator==(const NamedProp &, const NamedProp &) = default;
};

}  // namespace shardgraph
