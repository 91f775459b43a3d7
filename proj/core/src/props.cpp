#include "shardgraph/props.hpp"

#include <cstring>

#include "shardgraph/bytes.hpp"
#include "shardgraph/errors.hpp"

namespace shardgraph {

namespace {

constexpr uint8_t kTagString = 1;
constexpr uint8_t kTagInt64 = 2;
constexpr uint8_t kTagFloat64 = 3;
constexpr uint8_t kTagFloat64Vec = 4;
constexpr uint8_t kTagComposite = 5;

void need(std::string_view bytes, size_t pos, size_t n) {
  if (pos + n > bytes.size()) throw Error(ErrorCode::decode_error, "truncated property value");
}

uint64_t double_bits(double d) {
  uint64_t u;
  std::memcpy(&u, &d, 8);
  return u;
}

double bits_double(uint64_t u) {
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace

void encode_prop_value(std::string &out, const PropValue &value) {
  if (const auto *s = std::get_if<std::string>(&value.v)) {
    put_u8(out, kTagString);
    put_u32le(out, static_cast<uint32_t>(s->size()));
    out += *s;
  } else if (const auto *i = std::get_if<int64_t>(&value.v)) {
    put_u8(out, kTagInt64);
    put_u64le(out, static_cast<uint64_t>(*i));
  } else if (const auto *d = std::get_if<double>(&value.v)) {
    put_u8(out, kTagFloat64);
    put_u64le(out, double_bits(*d));
  } else if (const auto *vec = std::get_if<std::vector<double>>(&value.v)) {
    put_u8(out, kTagFloat64Vec);
    put_u32le(out, static_cast<uint32_t>(vec->size()));
    for (double d : *vec) put_u64le(out, double_bits(d));
  } else {
    const auto &children = std::get<PropList>(value.v);
    put_u8(out, kTagComposite);
    put_u32le(out, static_cast<uint32_t>(children.size()));
    for (const PropValue &c : children) encode_prop_value(out, c);
  }
}

PropValue decode_prop_value(std::string_view bytes, size_t &pos) {
  need(bytes, pos, 1);
  uint8_t tag = static_cast<uint8_t>(bytes[pos++]);
  const auto *p = reinterpret_cast<const uint8_t *>(bytes.data());
  switch (tag) {
    case kTagString: {
      need(bytes, pos, 4);
      uint32_t len = get_u32le(p + pos);
      pos += 4;
      need(bytes, pos, len);
      PropValue v(std::string(bytes.substr(pos, len)));
      pos += len;
      return v;
    }
    case kTagInt64: {
      need(bytes, pos, 8);
      int64_t i = static_cast<int64_t>(get_u64le(p + pos));
      pos += 8;
      return PropValue(i);
    }
    case kTagFloat64: {
      need(bytes, pos, 8);
      double d = bits_double(get_u64le(p + pos));
      pos += 8;
      return PropValue(d);
    }
    case kTagFloat64Vec: {
      need(bytes, pos, 4);
      uint32_t count = get_u32le(p + pos);
      pos += 4;
      need(bytes, pos, 8ull * count);
      std::vector<double> vec;
      vec.reserve(count);
      for (uint32_t i = 0; i < count; ++i) {
        vec.push_back(bits_double(get_u64le(p + pos)));
        pos += 8;
      }
      return PropValue(std::move(vec));
    }
    case kTagComposite: {
      need(bytes, pos, 4);
      uint32_t count = get_u32le(p + pos);
      pos += 4;
      PropList children;
      children.reserve(count);
      for (uint32_t i = 0; i < count; ++i) children.push_back(decode_prop_value(bytes, pos));
      return PropValue(std::move(children));
    }
    default:
      throw Error(ErrorCode::decode_error, "unknown property tag " + std::to_string(tag));
  }
}

std::string prop_value_to_string(const PropValue &value) {
  if (const auto *s = std::get_if<std::string>(&value.v)) return "\"" + *s + "\"";
  if (const auto *i = std::get_if<int64_t>(&value.v)) return std::to_string(*i);
  if (const auto *d = std::get_if<double>(&value.v)) {
    char buf[32];
    snprintf(buf, sizeof buf, "%.17g", *d);
    return buf;
  }
  if (const auto *vec = std::get_if<std::vector<double>>(&value.v)) {
    std::string out = "[";
    for (size_t i = 0; i < vec->size(); ++i) {
      if (i) out += ",";
      char buf[32];
      snprintf(buf, sizeof buf, "%.17g", (*vec)[i]);
      out += buf;
    }
    return out + "]";
  }
  const auto &children = std::get<PropList>(value.v);
  std::string out = "(";
  for (size_t i = 0; i < children.size(); ++i) {
    if (i) out += ",";
    out += prop_value_to_string(children[i]);
  }
  return out + ")";
}

}  // namespace shardgraph
