#pragma once

// RPC runtime over stream sockets. One connection per (caller, callee) pair,
// multiplexed by request id; incoming requests become task-pool tasks;
// responses complete poll-able handles. Per-opcode sent/received counters
// back the protocol message-budget checks.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "shardgraph/hostfile.hpp"
#include "shardgraph/task_pool.hpp"
#include "shardgraph/wire.hpp"

namespace shardgraph::rpc {

struct OpCounter {
  uint64_t sent = 0;
  uint64_t received = 0;
};

struct MessageCounters {
  std::map<uint16_t, OpCounter> per_opcode;

  uint64_t total_sent() const {
    uint64_t n = 0;
    for (const auto &[op, c] : per_opcode) n += c.sent;
    return n;
  }
  uint64_t total_received() const {
    uint64_t n = 0;
    for (const auto &[op, c] : per_opcode) n += c.received;
    return n;
  }
  uint64_t sent(uint16_t op) const {
    auto it = per_opcode.find(op);
    return it == per_opcode.end() ? 0 : it->second.sent;
  }
  uint64_t received(uint16_t op) const {
    auto it = per_opcode.find(op);
    return it == per_opcode.end() ? 0 : it->second.received;
  }
};

class CompletionHandle {
 public:
  enum class State { pending, ready, failed };

  State state() const {
    std::lock_guard lk(mu_);
    return state_;
  }
  bool done() const { return state() != State::pending; }
  void wait() const {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return state_ != State::pending; });
  }
  bool wait_for(std::chrono::milliseconds timeout) const {
    std::unique_lock lk(mu_);
    return cv_.wait_for(lk, timeout, [&] { return state_ != State::pending; });
  }
  // Waits, then returns the ok-response body or throws the carried error.
  std::string take();

  ErrorCode error_code() const {
    std::lock_guard lk(mu_);
    return error_code_;
  }
  const std::string &error_message() const { return error_message_; }

  // Local completion, for operations resolved without a wire round trip.
  void complete(std::string payload);
  void fail(ErrorCode code, std::string message);

 private:
  friend class RpcNode;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  State state_ = State::pending;
  std::string payload_;
  ErrorCode error_code_ = ErrorCode::rpc_failed;
  std::string error_message_;
  std::function<void()> on_done_;
};
using HandlePtr = std::shared_ptr<CompletionHandle>;

class RpcNode;

// Handed to request handlers; replies go out on the originating connection.
// token()/request_id() allow a different handler invocation to send the
// response later (used by the asynchronous add-edge confirmation).
class ReplyContext {
 public:
  void reply(std::string body);
  void reply_error(ErrorCode code, std::string_view message);
  bool is_oneway() const { return oneway_; }
  bool replied() const { return replied_; }
  uint64_t token() const { return conn_token_; }
  uint64_t request_id() const { return request_id_; }

 private:
  friend class RpcNode;
  RpcNode *node_ = nullptr;
  uint64_t conn_token_ = 0;
  uint64_t request_id_ = 0;
  uint16_t opcode_ = 0;
  bool oneway_ = false;
  bool replied_ = false;
};

using Handler = std::function<void(wire::PayloadReader &req, ReplyContext &ctx)>;

class RpcNode {
 public:
  // listen_node < 0 runs a client-only node (no listener). The pool is
  // required when listening; received requests are dispatched through it.
  RpcNode(ClusterView cluster, int listen_node, rt::TaskPool *pool);
  ~RpcNode();

  RpcNode(const RpcNode &) = delete;
  RpcNode &operator=(const RpcNode &) = delete;

  void register_handler(uint16_t opcode, Handler handler);
  void start();
  void stop();

  // Blocking request/response; throws the remote or transport error.
  std::string call(uint32_t node, uint16_t opcode, std::string payload);
  HandlePtr call_async(uint32_t node, uint16_t opcode, std::string payload);
  // Fire-and-forget single frame.
  void send_oneway(uint32_t node, uint16_t opcode, std::string payload);
  // One-way frame whose confirmation arrives later as a response frame with
  // the same request id (written by some remote handler via reply_to_token).
  HandlePtr send_oneway_with_completion(uint32_t node, uint16_t opcode, std::string payload);

  // Sends a response frame on the inbound connection identified by token.
  bool reply_to_token(uint64_t token, uint16_t opcode, uint64_t request_id, std::string body);

  // Blocks until any completion arrives or the timeout passes.
  void poll(std::chrono::milliseconds timeout = std::chrono::milliseconds(5));

  MessageCounters counters_snapshot() const;
  void counters_reset();

  int node_id() const { return listen_node_; }
  const ClusterView &cluster() const { return cluster_; }

 private:
  struct Conn : std::enable_shared_from_this<Conn> {
    int fd = -1;
    uint64_t token = 0;
    int peer_node = -1;
    std::atomic<bool> alive{true};
    std::mutex write_mu;
    std::mutex pending_mu;
    std::unordered_map<uint64_t, HandlePtr> pending;
  };
  using ConnPtr = std::shared_ptr<Conn>;

  ConnPtr connect_to(uint32_t node);
  void send_frame(const ConnPtr &conn, const wire::Frame &frame);
  void reader_loop(ConnPtr conn);
  void accept_loop();
  void drop_conn(const ConnPtr &conn, ErrorCode code, const std::string &why);
  void dispatch(const ConnPtr &conn, wire::Frame frame);
  void count_sent(uint16_t opcode);
  void count_received(uint16_t opcode);
  void notify_completion();
  HandlePtr send_request(uint32_t node, uint16_t opcode, std::string payload, uint8_t flags);

  ClusterView cluster_;
  int listen_node_;
  rt::TaskPool *pool_;

  std::mutex handlers_mu_;
  std::unordered_map<uint16_t, Handler> handlers_;

  int listen_fd_ = -1;
  std::thread accept_thread_;
  std::atomic<bool> stopping_{false};
  std::atomic<uint64_t> next_request_id_{1};
  std::atomic<uint64_t> next_conn_token_{1};

  std::mutex conns_mu_;
  std::unordered_map<uint32_t, ConnPtr> outbound_;       // by peer node
  std::unordered_map<uint64_t, ConnPtr> all_conns_;      // by token
  std::vector<std::thread> reader_threads_;

  mutable std::mutex counters_mu_;
  std::map<uint16_t, OpCounter> counters_;

  std::mutex poll_mu_;
  std::condition_variable poll_cv_;
  uint64_t completion_events_ = 0;
};

}  // namespace shardgraph::rpc
