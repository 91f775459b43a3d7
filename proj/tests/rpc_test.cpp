#include "shardgraph/rpc.hpp"

#include <gtest/gtest.h>

#include <thread>

#include "shardgraph/task_pool.hpp"
#include "test_util.hpp"

using namespace shardgraph;
using namespace shardgraph::rpc;
using shardgraph::test::pick_free_ports;

namespace {

constexpr uint16_t kOpEcho = 0x0900;
constexpr uint16_t kOpRelay = 0x0901;
constexpr uint16_t kOpSlowEcho = 0x0902;
constexpr uint16_t kOpDeferred = 0x0903;
constexpr uint16_t kOpNote = 0x0904;

ClusterView local_cluster(size_t n) {
  ClusterView view;
  auto ports = pick_free_ports(n);
  for (size_t i = 0; i < n; ++i)
    view.endpoints.push_back({static_cast<uint32_t>(i), "127.0.0.1", ports[i]});
  return view;
}

struct TestNode {
  rt::TaskPool pool{2};
  std::unique_ptr<RpcNode> node;

  TestNode(const ClusterView &view, int id) {
    node = std::make_unique<RpcNode>(view, id, &pool);
  }
  ~TestNode() {
    node->stop();
    pool.shutdown();
  }
};

}  // namespace

TEST(Rpc, EchoCallAndCounters) {
  ClusterView view = local_cluster(2);
  TestNode server(view, 0);
  server.node->register_handler(kOpEcho, [](wire::PayloadReader &req, ReplyContext &ctx) {
    ctx.reply(std::string(req.rest()));
  });
  server.node->start();

  TestNode client(view, -1);
  std::string out = client.node->call(0, kOpEcho, "abc");
  EXPECT_EQ(out, "abc");

  MessageCounters c = client.node->counters_snapshot();
  EXPECT_EQ(c.sent(kOpEcho), 1u);
  EXPECT_EQ(c.received(kOpEcho), 1u);

  client.node->counters_reset();
  EXPECT_EQ(client.node->counters_snapshot().total_sent(), 0u);
}

TEST(Rpc, AsyncCallsCompleteInAnyOrder) {
  ClusterView view = local_cluster(1);
  TestNode server(view, 0);
  server.node->register_handler(kOpSlowEcho, [](wire::PayloadReader &req, ReplyContext &ctx) {
    std::string s(req.rest());
    if (s == "slow") std::this_thread::sleep_for(std::chrono::milliseconds(50));
    ctx.reply(std::move(s));
  });
  server.node->start();

  TestNode client(view, -1);
  HandlePtr slow = client.node->call_async(0, kOpSlowEcho, "slow");
  HandlePtr fast = client.node->call_async(0, kOpSlowEcho, "fast");
  while (!slow->done() || !fast->done()) client.node->poll();
  EXPECT_EQ(slow->take(), "slow");
  EXPECT_EQ(fast->take(), "fast");
}

TEST(Rpc, DeadPortIsConnectionRefused) {
  ClusterView view = local_cluster(1);  // nobody listens on it
  TestNode client(view, -1);
  try {
    client.node->call(0, kOpEcho, "x");
    FAIL() << "expected connection_refused";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::connection_refused);
  }
}

TEST(Rpc, RemoteHandlerErrorPropagates) {
  ClusterView view = local_cluster(1);
  TestNode server(view, 0);
  server.node->register_handler(kOpEcho, [](wire::PayloadReader &, ReplyContext &) {
    throw Error(ErrorCode::not_found, "nothing here");
  });
  server.node->start();
  TestNode client(view, -1);
  try {
    client.node->call(0, kOpEcho, "x");
    FAIL() << "expected not_found";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
}

TEST(Rpc, UnknownOpcodeFailsTheCallNotTheServer) {
  ClusterView view = local_cluster(1);
  TestNode server(view, 0);
  server.node->register_handler(kOpEcho, [](wire::PayloadReader &req, ReplyContext &ctx) {
    ctx.reply(std::string(req.rest()));
  });
  server.node->start();
  TestNode client(view, -1);
  EXPECT_THROW(client.node->call(0, 0x0777, "x"), Error);
  EXPECT_EQ(client.node->call(0, kOpEcho, "still alive"), "still alive");
}

// A handler may issue calls to a third node (nested RPC).
TEST(Rpc, ThreeNodeRelay) {
  ClusterView view = local_cluster(3);
  TestNode a(view, 0), b(view, 1), c(view, 2);
  c.node->register_handler(kOpEcho, [](wire::PayloadReader &req, ReplyContext &ctx) {
    ctx.reply(std::string(req.rest()) + "+c");
  });
  b.node->register_handler(kOpRelay, [&](wire::PayloadReader &req, ReplyContext &ctx) {
    std::string forwarded = b.node->call(2, kOpEcho, std::string(req.rest()) + "+b");
    ctx.reply(std::move(forwarded));
  });
  a.node->start();
  b.node->start();
  c.node->start();

  std::string out = a.node->call(1, kOpRelay, "a");
  EXPECT_EQ(out, "a+b+c");
}

// After quiescence, requests sent equals responses received per opcode.
TEST(Rpc, RequestResponsePairing) {
  ClusterView view = local_cluster(1);
  TestNode server(view, 0);
  server.node->register_handler(kOpEcho, [](wire::PayloadReader &req, ReplyContext &ctx) {
    ctx.reply(std::string(req.rest()));
  });
  server.node->start();
  TestNode client(view, -1);

  std::vector<HandlePtr> handles;
  for (int i = 0; i < 64; ++i)
    handles.push_back(client.node->call_async(0, kOpEcho, std::to_string(i)));
  for (auto &h : handles) h->wait();
  for (auto &h : handles) EXPECT_EQ(h->state(), CompletionHandle::State::ready);

  MessageCounters snap = client.node->counters_snapshot();
  EXPECT_EQ(snap.sent(kOpEcho), 64u);
  EXPECT_EQ(snap.received(kOpEcho), 64u);
  MessageCounters server_snap = server.node->counters_snapshot();
  EXPECT_EQ(server_snap.received(kOpEcho), 64u);
  EXPECT_EQ(server_snap.sent(kOpEcho), 64u);
}

TEST(Rpc, OnewayCountsOneMessage) {
  ClusterView view = local_cluster(1);
  std::atomic<int> notes{0};
  TestNode server(view, 0);
  server.node->register_handler(kOpNote, [&](wire::PayloadReader &, ReplyContext &ctx) {
    EXPECT_TRUE(ctx.is_oneway());
    notes.fetch_add(1);
  });
  server.node->start();
  TestNode client(view, -1);
  for (int i = 0; i < 5; ++i) client.node->send_oneway(0, kOpNote, "n");
  while (notes.load() < 5) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  MessageCounters snap = client.node->counters_snapshot();
  EXPECT_EQ(snap.sent(kOpNote), 5u);
  EXPECT_EQ(snap.received(kOpNote), 0u);
}

// A one-way frame whose confirmation is produced later by another handler
// via the connection token (the asynchronous add-edge pattern).
TEST(Rpc, DeferredCompletionViaToken) {
  ClusterView view = local_cluster(1);
  TestNode server(view, 0);
  struct Pending {
    uint64_t token, request_id;
  };
  std::mutex mu;
  std::vector<Pending> parked;
  server.node->register_handler(kOpDeferred, [&](wire::PayloadReader &, ReplyContext &ctx) {
    std::lock_guard lk(mu);
    parked.push_back({ctx.token(), ctx.request_id()});
  });
  server.node->register_handler(kOpNote, [&](wire::PayloadReader &, ReplyContext &) {
    std::lock_guard lk(mu);
    for (const Pending &p : parked)
      server.node->reply_to_token(p.token, kOpDeferred, p.request_id,
                                  wire::ok_response("later"));
    parked.clear();
  });
  server.node->start();

  TestNode client(view, -1);
  HandlePtr h = client.node->send_oneway_with_completion(0, kOpDeferred, "park me");
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  EXPECT_FALSE(h->done());
  client.node->send_oneway(0, kOpNote, "release");
  while (!h->done()) client.node->poll();
  EXPECT_EQ(h->take(), "later");
}

// Malformed frames close that connection with a decode error; the server
// keeps serving other clients.
TEST(Rpc, MalformedFrameClosesConnectionOnly) {
  ClusterView view = local_cluster(1);
  TestNode server(view, 0);
  server.node->register_handler(kOpEcho, [](wire::PayloadReader &req, ReplyContext &ctx) {
    ctx.reply(std::string(req.rest()));
  });
  server.node->start();

  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(view.endpoints[0].port);
  inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr *>(&addr), sizeof addr), 0);
  const char junk[] = "\xff\xff\xff\xffgarbage";
  ASSERT_GT(::send(fd, junk, sizeof junk, 0), 0);
  char buf[16];
  EXPECT_LE(::recv(fd, buf, sizeof buf, 0), 0);  // server closed us
  ::close(fd);

  TestNode client(view, -1);
  EXPECT_EQ(client.node->call(0, kOpEcho, "fine"), "fine");
}

TEST(Rpc, PeerShutdownFailsPendingHandles) {
  ClusterView view = local_cluster(1);
  auto server = std::make_unique<TestNode>(view, 0);
  std::atomic<bool> block{true};
  server->node->register_handler(kOpSlowEcho, [&](wire::PayloadReader &, ReplyContext &ctx) {
    while (block.load()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    ctx.reply("too late");
  });
  server->node->start();

  TestNode client(view, -1);
  HandlePtr h = client.node->call_async(0, kOpSlowEcho, "x");
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  block = false;
  server.reset();  // drops the connection
  h->wait();
  EXPECT_TRUE(h->state() == CompletionHandle::State::failed ||
              h->state() == CompletionHandle::State::ready);
}
