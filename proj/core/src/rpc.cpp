#include "shardgraph/rpc.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <iostream>

namespace shardgraph::rpc {

using wire::Frame;

namespace {

bool read_full(int fd, void *buf, size_t len) {
  auto *p = static_cast<uint8_t *>(buf);
  while (len > 0) {
    ssize_t n = ::recv(fd, p, len, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (n == 0) return false;
    p += n;
    len -= static_cast<size_t>(n);
  }
  return true;
}

bool write_full(int fd, const void *buf, size_t len) {
  auto *p = static_cast<const uint8_t *>(buf);
  while (len > 0) {
    ssize_t n = ::send(fd, p, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += n;
    len -= static_cast<size_t>(n);
  }
  return true;
}

int tcp_connect(const std::string &host, uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo *res = nullptr;
  std::string port_str = std::to_string(port);
  if (getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res) != 0 || !res)
    throw Error(ErrorCode::connection_refused, "cannot resolve " + host);
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    freeaddrinfo(res);
    throw Error(ErrorCode::connection_refused, "socket: " + std::string(strerror(errno)));
  }
  if (::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    int err = errno;
    freeaddrinfo(res);
    ::close(fd);
    throw Error(ErrorCode::connection_refused,
                host + ":" + port_str + ": " + std::string(strerror(err)));
  }
  freeaddrinfo(res);
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

}  // namespace

// ---- CompletionHandle ----

void CompletionHandle::complete(std::string payload) {
  std::function<void()> cb;
  {
    std::lock_guard lk(mu_);
    if (state_ != State::pending) return;
    payload_ = std::move(payload);
    state_ = State::ready;
    cb = std::move(on_done_);
  }
  cv_.notify_all();
  if (cb) cb();
}

void CompletionHandle::fail(ErrorCode code, std::string message) {
  std::function<void()> cb;
  {
    std::lock_guard lk(mu_);
    if (state_ != State::pending) return;
    error_code_ = code;
    error_message_ = std::move(message);
    state_ = State::failed;
    cb = std::move(on_done_);
  }
  cv_.notify_all();
  if (cb) cb();
}

std::string CompletionHandle::take() {
  wait();
  std::lock_guard lk(mu_);
  if (state_ == State::failed) throw Error(error_code_, error_message_);
  return std::string(wire::check_response(payload_));
}

// ---- ReplyContext ----

void ReplyContext::reply(std::string body) {
  if (oneway_ || replied_) return;
  replied_ = true;
  node_->reply_to_token(conn_token_, opcode_, request_id_, wire::ok_response(std::move(body)));
}

void ReplyContext::reply_error(ErrorCode code, std::string_view message) {
  if (oneway_ || replied_) return;
  replied_ = true;
  node_->reply_to_token(conn_token_, opcode_, request_id_, wire::error_response(code, message));
}

// ---- RpcNode ----

RpcNode::RpcNode(ClusterView cluster, int listen_node, rt::TaskPool *pool)
    : cluster_(std::move(cluster)), listen_node_(listen_node), pool_(pool) {
  if (listen_node_ >= 0 && !pool_)
    throw Error(ErrorCode::invalid_argument, "a listening node needs a task pool");
}

RpcNode::~RpcNode() { stop(); }

void RpcNode::register_handler(uint16_t opcode, Handler handler) {
  std::lock_guard lk(handlers_mu_);
  if (!handlers_.emplace(opcode, std::move(handler)).second)
    throw Error(ErrorCode::already_exists, "handler for opcode already registered");
}

void RpcNode::start() {
  if (listen_node_ < 0) return;
  const Endpoint &ep = cluster_.endpoint(static_cast<uint32_t>(listen_node_));
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::io_error, "socket: " + std::string(strerror(errno)));
  int one = 1;
  setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr *>(&addr), sizeof addr) != 0) {
    std::string msg = "bind " + ep.host + ":" + std::to_string(ep.port) + ": " + strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::io_error, msg);
  }
  if (::listen(listen_fd_, 64) != 0) throw Error(ErrorCode::io_error, "listen failed");
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void RpcNode::stop() {
  bool was_stopping = stopping_.exchange(true);
  if (was_stopping && !accept_thread_.joinable() && reader_threads_.empty()) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  std::vector<ConnPtr> conns;
  {
    std::lock_guard lk(conns_mu_);
    for (auto &[token, c] : all_conns_) conns.push_back(c);
  }
  for (const ConnPtr &c : conns) drop_conn(c, ErrorCode::peer_closed, "node stopping");
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> readers;
  {
    std::lock_guard lk(conns_mu_);
    readers.swap(reader_threads_);
  }
  for (std::thread &t : readers)
    if (t.joinable()) t.join();
}

void RpcNode::accept_loop() {
  while (!stopping_) {
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (stopping_) return;
      if (errno == EINTR) continue;
      return;
    }
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto conn = std::make_shared<Conn>();
    conn->fd = fd;
    conn->token = next_conn_token_.fetch_add(1);
    {
      std::lock_guard lk(conns_mu_);
      all_conns_[conn->token] = conn;
      reader_threads_.emplace_back([this, conn] { reader_loop(conn); });
    }
  }
}

RpcNode::ConnPtr RpcNode::connect_to(uint32_t node) {
  {
    std::lock_guard lk(conns_mu_);
    auto it = outbound_.find(node);
    if (it != outbound_.end() && it->second->alive) return it->second;
  }
  const Endpoint &ep = cluster_.endpoint(node);
  int fd = tcp_connect(ep.host, ep.port);
  auto conn = std::make_shared<Conn>();
  conn->fd = fd;
  conn->token = next_conn_token_.fetch_add(1);
  conn->peer_node = static_cast<int>(node);
  {
    std::lock_guard lk(conns_mu_);
    auto it = outbound_.find(node);
    if (it != outbound_.end() && it->second->alive) {
      // Lost the connect race; use the winner.
      ::close(fd);
      return it->second;
    }
    outbound_[node] = conn;
    all_conns_[conn->token] = conn;
    reader_threads_.emplace_back([this, conn] { reader_loop(conn); });
  }
  return conn;
}

void RpcNode::count_sent(uint16_t opcode) {
  if (wire::is_admin_opcode(opcode)) return;
  std::lock_guard lk(counters_mu_);
  counters_[opcode].sent++;
}

void RpcNode::count_received(uint16_t opcode) {
  if (wire::is_admin_opcode(opcode)) return;
  std::lock_guard lk(counters_mu_);
  counters_[opcode].received++;
}

void RpcNode::send_frame(const ConnPtr &conn, const Frame &frame) {
  std::string buf;
  buf.reserve(wire::kFrameHeaderLen + frame.payload.size());
  wire::encode_frame(buf, frame);
  bool ok;
  {
    std::lock_guard lk(conn->write_mu);
    ok = conn->alive && write_full(conn->fd, buf.data(), buf.size());
  }
  if (!ok) {
    drop_conn(conn, ErrorCode::peer_closed, "write failed");
    throw Error(ErrorCode::peer_closed, "connection lost while sending");
  }
  count_sent(frame.opcode);
}

void RpcNode::drop_conn(const ConnPtr &conn, ErrorCode code, const std::string &why) {
  bool was_alive = conn->alive.exchange(false);
  if (was_alive) {
    ::shutdown(conn->fd, SHUT_RDWR);
  }
  std::unordered_map<uint64_t, HandlePtr> pending;
  {
    std::lock_guard lk(conn->pending_mu);
    pending.swap(conn->pending);
  }
  for (auto &[id, handle] : pending) handle->fail(code, why);
  if (!pending.empty()) notify_completion();
  {
    std::lock_guard lk(conns_mu_);
    all_conns_.erase(conn->token);
    if (conn->peer_node >= 0) {
      auto it = outbound_.find(static_cast<uint32_t>(conn->peer_node));
      if (it != outbound_.end() && it->second == conn) outbound_.erase(it);
    }
  }
}

void RpcNode::reader_loop(ConnPtr conn) {
  while (conn->alive && !stopping_) {
    uint8_t lenbuf[4];
    if (!read_full(conn->fd, lenbuf, 4)) break;
    uint32_t len = get_u32le(lenbuf);
    if (len < 11 || len > wire::kMaxFrameBody) {
      std::cerr << "rpc: decode_error, closing connection (bad frame length " << len << ")\n";
      break;
    }
    std::string body(len, '\0');
    if (!read_full(conn->fd, body.data(), len)) break;
    Frame frame;
    try {
      frame = wire::decode_frame_body(body);
    } catch (const Error &e) {
      std::cerr << "rpc: " << e.what() << ", closing connection\n";
      break;
    }
    count_received(frame.opcode);
    if (frame.flags == wire::kFlagResponse) {
      HandlePtr handle;
      {
        std::lock_guard lk(conn->pending_mu);
        auto it = conn->pending.find(frame.request_id);
        if (it != conn->pending.end()) {
          handle = it->second;
          conn->pending.erase(it);
        }
      }
      if (handle) {
        handle->complete(std::move(frame.payload));
        notify_completion();
      }
      continue;
    }
    dispatch(conn, std::move(frame));
  }
  drop_conn(conn, ErrorCode::peer_closed, "connection closed");
  ::close(conn->fd);
}

void RpcNode::dispatch(const ConnPtr &conn, Frame frame) {
  Handler handler;
  {
    std::lock_guard lk(handlers_mu_);
    auto it = handlers_.find(frame.opcode);
    if (it != handlers_.end()) handler = it->second;
  }
  uint64_t token = conn->token;
  if (!handler) {
    if (frame.flags == wire::kFlagRequest)
      reply_to_token(token, frame.opcode, frame.request_id,
                     wire::error_response(ErrorCode::rpc_failed, "no such opcode"));
    return;
  }
  if (!pool_) return;
  pool_->submit([this, handler = std::move(handler), frame = std::move(frame), token]() mutable {
    ReplyContext ctx;
    ctx.node_ = this;
    ctx.conn_token_ = token;
    ctx.request_id_ = frame.request_id;
    ctx.opcode_ = frame.opcode;
    ctx.oneway_ = frame.flags == wire::kFlagOneWay;
    wire::PayloadReader reader(frame.payload);
    try {
      handler(reader, ctx);
    } catch (const Error &e) {
      ctx.reply_error(e.code(), e.what());
    } catch (const std::exception &e) {
      ctx.reply_error(ErrorCode::rpc_failed, e.what());
    }
  });
}

bool RpcNode::reply_to_token(uint64_t token, uint16_t opcode, uint64_t request_id,
                             std::string body) {
  ConnPtr conn;
  {
    std::lock_guard lk(conns_mu_);
    auto it = all_conns_.find(token);
    if (it != all_conns_.end()) conn = it->second;
  }
  if (!conn || !conn->alive) return false;
  Frame frame;
  frame.opcode = opcode;
  frame.request_id = request_id;
  frame.flags = wire::kFlagResponse;
  frame.payload = std::move(body);
  try {
    send_frame(conn, frame);
  } catch (const Error &) {
    return false;
  }
  return true;
}

HandlePtr RpcNode::send_request(uint32_t node, uint16_t opcode, std::string payload,
                                uint8_t flags) {
  auto handle = std::make_shared<CompletionHandle>();
  ConnPtr conn;
  try {
    conn = connect_to(node);
  } catch (const Error &e) {
    handle->fail(e.code(), e.what());
    notify_completion();
    return handle;
  }
  Frame frame;
  frame.opcode = opcode;
  frame.request_id = next_request_id_.fetch_add(1);
  frame.flags = flags;
  frame.payload = std::move(payload);
  {
    std::lock_guard lk(conn->pending_mu);
    conn->pending[frame.request_id] = handle;
  }
  try {
    send_frame(conn, frame);
  } catch (const Error &e) {
    handle->fail(e.code(), e.what());
    notify_completion();
  }
  return handle;
}

std::string RpcNode::call(uint32_t node, uint16_t opcode, std::string payload) {
  return call_async(node, opcode, std::move(payload))->take();
}

HandlePtr RpcNode::call_async(uint32_t node, uint16_t opcode, std::string payload) {
  return send_request(node, opcode, std::move(payload), wire::kFlagRequest);
}

HandlePtr RpcNode::send_oneway_with_completion(uint32_t node, uint16_t opcode,
                                               std::string payload) {
  return send_request(node, opcode, std::move(payload), wire::kFlagOneWay);
}

void RpcNode::send_oneway(uint32_t node, uint16_t opcode, std::string payload) {
  ConnPtr conn = connect_to(node);
  Frame frame;
  frame.opcode = opcode;
  frame.request_id = next_request_id_.fetch_add(1);
  frame.flags = wire::kFlagOneWay;
  frame.payload = std::move(payload);
  send_frame(conn, frame);
}

void RpcNode::poll(std::chrono::milliseconds timeout) {
  std::unique_lock lk(poll_mu_);
  uint64_t seen = completion_events_;
  poll_cv_.wait_for(lk, timeout, [&] { return completion_events_ != seen; });
}

void RpcNode::notify_completion() {
  {
    std::lock_guard lk(poll_mu_);
    ++completion_events_;
  }
  poll_cv_.notify_all();
}

MessageCounters RpcNode::counters_snapshot() const {
  MessageCounters out;
  std::lock_guard lk(counters_mu_);
  out.per_opcode = counters_;
  return out;
}

void RpcNode::counters_reset() {
  std::lock_guard lk(counters_mu_);
  counters_.clear();
}

}  // namespace shardgraph::rpc
