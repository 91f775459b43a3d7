#pragma once

#include <stdexcept>
#include <string>

namespace shardgraph {

enum class ErrorCode {
  io_error,
  incompatible_format,
  env_closed,
  txn_closed,
  read_only_violation,
  storage_full,
  key_too_large,
  value_too_large,
  already_exists,
  not_found,
  vertex_not_found,
  invalid_label,
  label_space_exhausted,
  invalid_argument,
  decode_error,
  connection_refused,
  peer_closed,
  rpc_failed,
  start_not_found,
  shard_unreachable,
};

const char *error_code_name(ErrorCode c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char *error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::incompatible_format: return "incompatible_format";
    case ErrorCode::env_closed: return "env_closed";
    case ErrorCode::txn_closed: return "txn_closed";
    case ErrorCode::read_only_violation: return "read_only_violation";
    case ErrorCode::storage_full: return "storage_full";
    case ErrorCode::key_too_large: return "key_too_large";
    case ErrorCode::value_too_large: return "value_too_large";
    case ErrorCode::already_exists: return "already_exists";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::vertex_not_found: return "vertex_not_found";
    case ErrorCode::invalid_label: return "invalid_label";
    case ErrorCode::label_space_exhausted: return "label_space_exhausted";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::decode_error: return "decode_error";
    case ErrorCode::connection_refused: return "connection_refused";
    case ErrorCode::peer_closed: return "peer_closed";
    case ErrorCode::rpc_failed: return "rpc_failed";
    case ErrorCode::start_not_found: return "start_not_found";
    case ErrorCode::shard_unreachable: return "shard_unreachable";
  }
  return "unknown";
}

}  // namespace shardgraph
