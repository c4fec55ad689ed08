#include <doctest.h>

#include <cstring>

#include "fedclust/fedruntime.hpp"

using namespace fedclust;

namespace {

Matrix filled(Index r, Index c, double start) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = start + double(i);
  return m;
}

// Plan where every client uploads a fixed-shape model and the server
// records which clients were heard from.
RoundPlan model_plan(Index m, Index k, std::vector<std::size_t>& touched,
                     std::vector<std::size_t>& heard) {
  RoundPlan plan;
  plan.broadcast = Message{0, kServerId, BroadcastW{Matrix::Zero(m, k)}};
  plan.client_compute = [&touched](int, std::size_t c, const Message* b) {
    REQUIRE(b != nullptr);
    touched.push_back(c);
  };
  plan.client_upload = [m, k](std::size_t c) {
    return Message{0, std::uint32_t(c), UploadW{Matrix::Constant(m, k, double(c))}};
  };
  plan.expected_upload = {2, m, k};
  plan.server_step = [&heard](const std::vector<Message>& ups) {
    for (const auto& u : ups) heard.push_back(u.sender);
  };
  return plan;
}

}  // namespace

TEST_CASE("real value counts") {
  CHECK(Message{1, kServerId, BroadcastW{Matrix::Zero(4, 3)}}.real_value_count() == 12);
  CHECK(Message{1, 0, UploadW{Matrix::Zero(4, 3)}}.real_value_count() == 12);
  CHECK(Message{1, 0, UploadDiff{Matrix::Zero(3, 3), Matrix::Zero(4, 3)}}.real_value_count() ==
        12 + 9);
}

TEST_CASE("wire format") {
  const Message m{7, 3, UploadW{filled(2, 3, 0.5)}};
  const auto bytes = encode(m);
  REQUIRE(bytes.size() == 17 + 6 * 8);
  CHECK(bytes[0] == 2);
  // little-endian u32 fields
  CHECK(bytes[1] == 7);
  CHECK(bytes[5] == 3);
  CHECK(bytes[9] == 2);
  CHECK(bytes[13] == 3);
  double first = 0.0;
  std::memcpy(&first, bytes.data() + 17, 8);
  CHECK(first == 0.5);

  const Message back = decode(bytes);
  CHECK(back.round == 7);
  CHECK(back.sender == 3);
  REQUIRE(back.tag() == 2);
  CHECK(std::get<UploadW>(back.payload).w == filled(2, 3, 0.5));

  const Message diff{2, 1, UploadDiff{filled(3, 3, -4.0), filled(5, 3, 10.0)}};
  const auto db = encode(diff);
  CHECK(db.size() == 17 + (9 + 15) * 8);
  const Message dback = decode(db);
  CHECK(std::get<UploadDiff>(dback.payload).u == filled(3, 3, -4.0));
  CHECK(std::get<UploadDiff>(dback.payload).v == filled(5, 3, 10.0));

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode(truncated), ProtocolError);
  auto bad_tag = bytes;
  bad_tag[0] = 9;
  CHECK_THROWS_AS(decode(bad_tag), ProtocolError);
  CHECK_THROWS_AS(decode(std::vector<std::uint8_t>(5, 0)), ProtocolError);
  CHECK_THROWS_AS(encode(Message{0, 0, UploadDiff{Matrix::Zero(2, 2), Matrix::Zero(4, 3)}}),
                  ProtocolError);
}

TEST_CASE("in-memory transport is FIFO per endpoint") {
  InMemoryTransport t;
  t.keep_log(true);
  t.send(1, Message{1, kServerId, BroadcastW{filled(1, 1, 1.0)}});
  t.send(1, Message{2, kServerId, BroadcastW{filled(1, 1, 2.0)}});
  t.send(2, Message{3, kServerId, BroadcastW{filled(1, 1, 3.0)}});
  CHECK(t.recv(1)->round == 1);
  CHECK(t.recv(2)->round == 3);
  CHECK(t.recv(1)->round == 2);
  CHECK_FALSE(t.recv(1).has_value());
  CHECK(t.log().size() == 3);
}

TEST_CASE("closed_form_cost") {
  CHECK(closed_form_cost(SolverKind::FedCAvg, 784, 10, 100, 5) == 3920000u);
  CHECK(closed_form_cost(SolverKind::FedCGds, 784, 10, 10, 5) == 397000u);
  CHECK(closed_form_cost("fedcavg", 784, 10, 100, 0) == 0u);
  CHECK(closed_form_cost("fedcpalm", 2, 3, 4, 5) == 2u * 3 * 4 * 5);
  CHECK(closed_form_cost(SolverKind::PALM, 2, 3, 4, 5) == 0u);
  CHECK(bootstrap_cost(784, 10, 100) == (7840u + 100u) * 100u);
  CHECK_THROWS_AS(closed_form_cost("avg", 1, 1, 1, 1), std::invalid_argument);
}

TEST_CASE("run_round meters uplink only") {
  const Index m = 4, k = 3;
  Runtime rt(3);
  std::vector<std::size_t> touched, heard;
  auto plan = model_plan(m, k, touched, heard);
  const auto rec = rt.run_round(1, {0, 1, 2}, plan);
  CHECK(rec.uplink_round == 3u * m * k);
  CHECK(rt.meter().uplink_total() == closed_form_cost(SolverKind::FedCAvg, m, k, 3, 1));
  CHECK(heard == std::vector<std::size_t>{0, 1, 2});
  rt.run_round(2, {0, 1, 2}, plan);
  CHECK(rt.meter().uplink_total() == closed_form_cost(SolverKind::FedCAvg, m, k, 3, 2));
  CHECK(rt.meter().per_round() == std::vector<std::uint64_t>{36, 36});
}

TEST_CASE("partial participation") {
  const Index m = 5, k = 2;
  Runtime rt(4);
  rt.transport().keep_log(true);
  std::vector<std::size_t> touched;
  std::vector<std::size_t> heard;
  RoundPlan plan;
  plan.broadcast = Message{0, kServerId, BroadcastW{Matrix::Zero(m, k)}};
  plan.client_compute = [&](int, std::size_t c, const Message*) { touched.push_back(c); };
  plan.client_upload = [&](std::size_t c) {
    return Message{0, std::uint32_t(c), UploadDiff{Matrix::Zero(k, k), Matrix::Zero(m, k)}};
  };
  plan.expected_upload = {3, m, k};
  plan.server_step = [&](const std::vector<Message>& ups) {
    for (const auto& u : ups) heard.push_back(u.sender);
  };
  rt.run_round(1, {1, 3}, plan);
  CHECK(rt.meter().uplink_total() == 2u * (m * k + k * k));
  CHECK(touched == std::vector<std::size_t>{1, 3});
  CHECK(heard == std::vector<std::size_t>{1, 3});
  // Only the active clients received a broadcast.
  for (const auto& env : rt.transport().log()) {
    if (env.to != kServerId) CHECK((env.to == 1 || env.to == 3));
  }
}

TEST_CASE("run_round guards") {
  Runtime rt(2);
  std::vector<std::size_t> touched, heard;
  auto plan = model_plan(3, 2, touched, heard);
  CHECK_THROWS_AS(rt.run_round(1, {}, plan), std::invalid_argument);
  CHECK_THROWS_AS(rt.run_round(1, {0, 2}, plan), std::invalid_argument);
  CHECK_THROWS_AS(rt.run_round(1, {1, 1}, plan), std::invalid_argument);
  CHECK_THROWS_AS(Runtime(0), std::invalid_argument);

  SUBCASE("shape mismatch is a protocol error") {
    plan.client_upload = [](std::size_t c) {
      return Message{0, std::uint32_t(c), UploadW{Matrix::Zero(3, 3)}};
    };
    CHECK_THROWS_AS(rt.run_round(1, {0, 1}, plan), ProtocolError);
  }
  SUBCASE("wrong message kind is a protocol error") {
    plan.client_upload = [](std::size_t c) {
      return Message{0, std::uint32_t(c), UploadDiff{Matrix::Zero(2, 2), Matrix::Zero(3, 2)}};
    };
    CHECK_THROWS_AS(rt.run_round(1, {0, 1}, plan), ProtocolError);
  }
}

TEST_CASE("lockstep phases run barriers after every client") {
  Runtime rt(3);
  std::vector<std::string> events;
  RoundPlan plan;
  plan.phases = 2;
  plan.client_compute = [&](int phase, std::size_t c, const Message*) {
    events.push_back("c" + std::to_string(phase) + std::to_string(c));
  };
  plan.barrier = [&](int phase) { events.push_back("b" + std::to_string(phase)); };
  plan.client_upload = [](std::size_t c) {
    return Message{0, std::uint32_t(c), UploadW{Matrix::Zero(1, 1)}};
  };
  plan.expected_upload = {2, 1, 1};
  plan.server_step = [&](const std::vector<Message>&) { events.push_back("s"); };
  rt.run_round(1, {0, 1, 2}, plan);
  CHECK(events == std::vector<std::string>{"c00", "c01", "c02", "b0", "c10", "c11", "c12", "b1",
                                           "s"});
}

TEST_CASE("solver tags") {
  for (auto k : {SolverKind::FedCAvg, SolverKind::FedCGds, SolverKind::FedCPALM, SolverKind::PALM,
                 SolverKind::KMeansPP}) {
    CHECK(parse_solver_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_solver_kind("bogus"), std::invalid_argument);
}
