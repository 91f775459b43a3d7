#pragma once

// Wire protocol: every message is one frame,
//
//   length  u32 little-endian   byte count of everything after this field
//   opcode  u16 little-endian
//   request_id u64 little-endian
//   flags   u8                  0 request / 1 response / 2 one-way
//   payload                     flat little-endian fields per opcode
//
// Request/response pairs share the request_id and opcode. Response payloads
// begin with a status byte (0 ok, 1 error followed by a code byte and a
// message). The full per-opcode payload layouts live in docs/wire.md.

#include <cstdint>
#include <string>
#include <string_view>

#include "shardgraph/bytes.hpp"
#include "shardgraph/errors.hpp"

namespace shardgraph::wire {

inline constexpr uint8_t kFlagRequest = 0;
inline constexpr uint8_t kFlagResponse = 1;
inline constexpr uint8_t kFlagOneWay = 2;

inline constexpr size_t kFrameHeaderLen = 4 + 2 + 8 + 1;
inline constexpr uint32_t kMaxFrameBody = 256u << 20;

// ---- opcodes ----
// Shard data plane.
inline constexpr uint16_t kOpCheckOrCreateVertex = 0x0101;
inline constexpr uint16_t kOpFindVertex = 0x0102;
inline constexpr uint16_t kOpAddVertex = 0x0103;
inline constexpr uint16_t kOpAddOutgoingEdge = 0x0104;
inline constexpr uint16_t kOpAddIncomingEdge = 0x0105;
inline constexpr uint16_t kOpGetAllEdges = 0x0106;
inline constexpr uint16_t kOpGetOutEdges = 0x0107;
inline constexpr uint16_t kOpSetVertexProp = 0x0108;
inline constexpr uint16_t kOpGetVertexProp = 0x0109;
inline constexpr uint16_t kOpDeleteVertex = 0x010a;
inline constexpr uint16_t kOpPurgeEdge = 0x010b;
inline constexpr uint16_t kOpDeleteEdgeHalf = 0x010c;
inline constexpr uint16_t kOpCheckOrCreateLabel = 0x010d;
inline constexpr uint16_t kOpResolveVids = 0x010e;
inline constexpr uint16_t kOpSetEdgeProp = 0x010f;
inline constexpr uint16_t kOpGetEdgeProp = 0x0110;
inline constexpr uint16_t kOpDumpShard = 0x0120;
// Asynchronous add-edge chain (one-way hops; the optional confirmation comes
// back as a response frame on the originating connection).
inline constexpr uint16_t kOpAsyncEdgeResolveTarget = 0x0201;
inline constexpr uint16_t kOpAsyncEdgeWriteOutgoing = 0x0202;
inline constexpr uint16_t kOpAsyncEdgeWriteIncoming = 0x0203;
// Firehose bulk plane.
inline constexpr uint16_t kOpBulkVertices = 0x0301;
inline constexpr uint16_t kOpBulkEdges = 0x0302;
// Query manager client plane.
inline constexpr uint16_t kOpQmBfs = 0x0401;
inline constexpr uint16_t kOpQmAddVertex = 0x0402;
inline constexpr uint16_t kOpQmAddEdge = 0x0403;
inline constexpr uint16_t kOpQmGetVertex = 0x0404;
inline constexpr uint16_t kOpQmSetVertexProp = 0x0405;
inline constexpr uint16_t kOpQmGetVertexProp = 0x0406;
// Instrumentation and control; excluded from message counters.
inline constexpr uint16_t kOpAdminBase = 0xf000;
inline constexpr uint16_t kOpPing = 0xf001;
inline constexpr uint16_t kOpCountersGet = 0xf002;
inline constexpr uint16_t kOpCountersReset = 0xf003;
inline constexpr uint16_t kOpShardStats = 0xf004;
inline constexpr uint16_t kOpShutdown = 0xf005;

inline bool is_admin_opcode(uint16_t op) { return op >= kOpAdminBase; }

struct Frame {
  uint16_t opcode = 0;
  uint64_t request_id = 0;
  uint8_t flags = kFlagRequest;
  std::string payload;
};

inline void encode_frame(std::string &out, const Frame &f) {
  put_u32le(out, static_cast<uint32_t>(2 + 8 + 1 + f.payload.size()));
  put_u16le(out, f.opcode);
  put_u64le(out, f.request_id);
  put_u8(out, f.flags);
  out += f.payload;
}

// Decodes a frame body (everything after the length word).
inline Frame decode_frame_body(std::string_view body) {
  if (body.size() < 11) throw Error(ErrorCode::decode_error, "short frame");
  const auto *p = reinterpret_cast<const uint8_t *>(body.data());
  Frame f;
  f.opcode = get_u16le(p);
  f.request_id = get_u64le(p + 2);
  f.flags = p[10];
  if (f.flags > kFlagOneWay) throw Error(ErrorCode::decode_error, "bad frame flags");
  f.payload.assign(body.substr(11));
  return f;
}

// ---- payload codec ----

class PayloadWriter {
 public:
  std::string &out() { return buf_; }
  std::string take() { return std::move(buf_); }

  PayloadWriter &u8(uint8_t v) { put_u8(buf_, v); return *this; }
  PayloadWriter &u16(uint16_t v) { put_u16le(buf_, v); return *this; }
  PayloadWriter &u32(uint32_t v) { put_u32le(buf_, v); return *this; }
  PayloadWriter &u64(uint64_t v) { put_u64le(buf_, v); return *this; }
  PayloadWriter &bytes(std::string_view s) {
    put_u32le(buf_, static_cast<uint32_t>(s.size()));
    buf_ += s;
    return *this;
  }
  PayloadWriter &raw(std::string_view s) { buf_ += s; return *this; }

 private:
  std::string buf_;
};

class PayloadReader {
 public:
  explicit PayloadReader(std::string_view data) : data_(data) {}

  uint8_t u8() { need(1); return static_cast<uint8_t>(data_[pos_++]); }
  uint16_t u16() { need(2); uint16_t v = get_u16le(ptr()); pos_ += 2; return v; }
  uint32_t u32() { need(4); uint32_t v = get_u32le(ptr()); pos_ += 4; return v; }
  uint64_t u64() { need(8); uint64_t v = get_u64le(ptr()); pos_ += 8; return v; }
  std::string_view bytes() {
    uint32_t len = u32();
    need(len);
    std::string_view s = data_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }
  size_t remaining() const { return data_.size() - pos_; }
  size_t pos() const { return pos_; }
  std::string_view rest() const { return data_.substr(pos_); }
  void skip(size_t n) { need(n); pos_ += n; }

 private:
  const uint8_t *ptr() const { return reinterpret_cast<const uint8_t *>(data_.data()) + pos_; }
  void need(size_t n) const {
    if (pos_ + n > data_.size()) throw Error(ErrorCode::decode_error, "truncated payload");
  }
  std::string_view data_;
  size_t pos_ = 0;
};

// Response payload helpers: status byte then body.
inline std::string ok_response(std::string body = {}) {
  std::string out(1, '\0');
  out += body;
  return out;
}

inline std::string error_response(ErrorCode code, std::string_view message) {
  std::string out(1, '\1');
  put_u8(out, static_cast<uint8_t>(code));
  put_u32le(out, static_cast<uint32_t>(message.size()));
  out += message;
  return out;
}

// Returns the body of an ok response or throws the carried error.
inline std::string_view check_response(std::string_view payload) {
  if (payload.empty()) throw Error(ErrorCode::decode_error, "empty response");
  if (payload[0] == 0) return payload.substr(1);
  PayloadReader r(payload.substr(1));
  auto code = static_cast<ErrorCode>(r.u8());
  throw Error(code, std::string(r.bytes()));
}

}  // namespace shardgraph::wire
