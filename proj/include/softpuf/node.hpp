#pragma once

// UDP client and miner nodes and the three-phase transaction timing.
//
//   phase 1  client: derive key from the model, frame, hash
//   phase 2  network + miner: authenticate and mine
//   phase 3  miner: append and persist, then ACK back to the client
//
// Phase 2/3 are split at the miner's "mined" instant. That instant is only
// observable when the miner runs in the same process (same steady clock);
// against a remote miner the whole round trip is reported as phase 2.

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <stop_token>
#include <string>
#include <utility>
#include <vector>

#include "softpuf/bastion.hpp"
#include "softpuf/error.hpp"
#include "softpuf/ledger.hpp"
#include "softpuf/model.hpp"
#include "softpuf/registry.hpp"
#include "softpuf/wire.hpp"

namespace softpuf::node {

using Clock = std::chrono::steady_clock;

inline double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// ---------------------------------------------------------------------------
// Sockets

struct Endpoint {
  sockaddr_storage addr{};
  socklen_t len = 0;

  static Endpoint resolve(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_DGRAM;
    hints.ai_flags = AI_NUMERICSERV;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (int rc = getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0 || !res)
      fail(ErrorCode::transport, "cannot resolve " + host + ": " + gai_strerror(rc));
    Endpoint e;
    std::memcpy(&e.addr, res->ai_addr, res->ai_addrlen);
    e.len = static_cast<socklen_t>(res->ai_addrlen);
    freeaddrinfo(res);
    return e;
  }

  int family() const { return addr.ss_family; }

  std::uint16_t port() const {
    if (addr.ss_family == AF_INET) return ntohs(reinterpret_cast<const sockaddr_in&>(addr).sin_port);
    return ntohs(reinterpret_cast<const sockaddr_in6&>(addr).sin6_port);
  }
};

class UdpSocket {
 public:
  explicit UdpSocket(int family) : fd_(::socket(family, SOCK_DGRAM, 0)) {
    if (fd_ < 0) fail(ErrorCode::transport, std::string("socket: ") + std::strerror(errno));
  }
  ~UdpSocket() {
    if (fd_ >= 0) ::close(fd_);
  }
  UdpSocket(UdpSocket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  UdpSocket& operator=(UdpSocket&& o) noexcept {
    if (this != &o) {
      if (fd_ >= 0) ::close(fd_);
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  void bind(const Endpoint& e) {
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&e.addr), e.len) != 0)
      fail(ErrorCode::transport, std::string("bind: ") + std::strerror(errno));
  }

  Endpoint local() const {
    Endpoint e;
    e.len = sizeof e.addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&e.addr), &e.len);
    return e;
  }

  void send_to(std::span<const std::uint8_t> bytes, const Endpoint& to) {
    const auto n = ::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr*>(&to.addr), to.len);
    if (n != static_cast<ssize_t>(bytes.size())) fail(ErrorCode::transport, std::string("sendto: ") + std::strerror(errno));
  }

  // nullopt on timeout.
  std::optional<std::vector<std::uint8_t>> receive(std::chrono::milliseconds timeout, Endpoint* from = nullptr) {
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc < 0 && errno != EINTR) fail(ErrorCode::transport, std::string("poll: ") + std::strerror(errno));
    if (rc <= 0) return std::nullopt;
    std::vector<std::uint8_t> buf(512);
    Endpoint src;
    src.len = sizeof src.addr;
    const auto n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&src.addr), &src.len);
    if (n < 0) fail(ErrorCode::transport, std::string("recvfrom: ") + std::strerror(errno));
    buf.resize(static_cast<std::size_t>(n));
    if (from) *from = src;
    return buf;
  }

 private:
  int fd_ = -1;
};

// ---------------------------------------------------------------------------
// Miner

struct MinerConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = wire::kDefaultMinerPort;  // 0 picks an ephemeral port
  unsigned difficulty = 12;
  // When set, the required difficulty escalates with every appended block.
  std::optional<bastion::DefenseConfig> escalation;
  std::optional<std::filesystem::path> chain_path;
  std::ostream* log = nullptr;
};

// What the miner did with one transaction datagram.
struct MinerEvent {
  wire::Digest digest{};
  ledger::RejectReason reason = ledger::RejectReason::none;
  Clock::time_point received{}, mined{}, appended{};
  std::uint64_t block_index = 0;
  std::uint64_t attempts = 0;
};

class MinerNode {
 public:
  MinerNode(registry::Registry& reg, ledger::Chain chain, MinerConfig cfg)
      : registry_(reg), chain_(std::move(chain)), cfg_(std::move(cfg)),
        socket_(Endpoint::resolve(cfg_.host, cfg_.port).family()) {
    socket_.bind(Endpoint::resolve(cfg_.host, cfg_.port));
    start_height_ = chain_.size() - 1;
  }

  std::uint16_t port() const { return socket_.local().port(); }

  unsigned next_difficulty() const {
    unsigned d = std::max(cfg_.difficulty, chain_.current_difficulty());
    if (cfg_.escalation) {
      const std::uint64_t mined = chain_.size() - 1 - start_height_;
      d = std::max(d, bastion::escalate_difficulty(std::min(cfg_.difficulty, cfg_.escalation->max_difficulty), mined,
                                                   *cfg_.escalation));
    }
    return std::min(d, ledger::kMaxDifficulty);
  }

  // Handles at most one datagram. Returns true if one was processed.
  bool serve_once(std::chrono::milliseconds timeout) {
    Endpoint from;
    auto bytes = socket_.receive(timeout, &from);
    if (!bytes) return false;
    const auto received = Clock::now();

    wire::Datagram dg;
    try {
      dg = wire::parse_datagram(*bytes);
    } catch (const Error& e) {
      log("drop: " + std::string(e.what()));
      return true;
    }
    if (dg.type != wire::MsgType::transaction) {
      log("drop: unexpected message type");
      return true;
    }

    const auto parts = wire::split_transaction(dg.payload);
    MinerEvent ev;
    ev.digest = parts.digest;
    ev.received = received;

    std::unique_lock lock(chain_mutex_);
    const ledger::Verdict verdict = ledger::authenticate(registry_, parts.frame, parts.digest);
    ev.reason = verdict.reason;
    if (!verdict.accepted()) {
      ev.mined = ev.appended = Clock::now();
      lock.unlock();
      socket_.send_to(wire::make_datagram(wire::MsgType::reject, parts.digest), from);
      log("reject " + std::string(ledger::to_string(verdict.reason)));
      record(ev);
      return true;
    }

    const unsigned difficulty = next_difficulty();
    const auto block = ledger::mine_block(chain_, ledger::make_payload(parts.frame, parts.digest), difficulty, 0,
                                          static_cast<std::uint64_t>(std::time(nullptr)));
    ev.mined = Clock::now();
    ev.attempts = block.nonce + 1;
    const auto appended = chain_.append(block);
    if (appended != ledger::AppendReason::ok) fail(ErrorCode::integrity, "own block rejected: " + std::string(ledger::to_string(appended)));
    if (cfg_.chain_path) ledger::save_chain(chain_, *cfg_.chain_path);
    ev.appended = Clock::now();
    ev.block_index = block.index;
    lock.unlock();

    socket_.send_to(wire::make_datagram(wire::MsgType::ack, parts.digest), from);
    log("accept " + verdict.identity->mac.to_string() + " block=" + std::to_string(block.index) +
        " difficulty=" + std::to_string(difficulty) + " attempts=" + std::to_string(ev.attempts));
    record(ev);
    return true;
  }

  void serve(std::stop_token stop) {
    while (!stop.stop_requested()) serve_once(std::chrono::milliseconds(50));
  }

  ledger::Chain chain() const {
    std::lock_guard lock(chain_mutex_);
    return chain_;
  }

  // Event for the transaction with this digest, waiting up to `timeout`.
  std::optional<MinerEvent> event_for(const wire::Digest& digest, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(events_mutex_);
    events_cv_.wait_for(lock, timeout, [&] { return events_.count(digest) > 0; });
    auto it = events_.find(digest);
    if (it == events_.end()) return std::nullopt;
    return it->second;
  }

 private:
  void log(const std::string& line) const {
    if (cfg_.log) *cfg_.log << "[miner] " << line << std::endl;
  }

  void record(const MinerEvent& ev) {
    {
      std::lock_guard lock(events_mutex_);
      events_[ev.digest] = ev;
    }
    events_cv_.notify_all();
  }

  registry::Registry& registry_;
  ledger::Chain chain_;
  MinerConfig cfg_;
  UdpSocket socket_;
  std::size_t start_height_ = 0;
  mutable std::mutex chain_mutex_;
  mutable std::mutex events_mutex_;
  mutable std::condition_variable events_cv_;
  std::map<wire::Digest, MinerEvent> events_;
};

// ---------------------------------------------------------------------------
// Client

struct PhaseTimings {
  double phase1_ms = 0.0;
  double phase2_ms = 0.0;
  double phase3_ms = 0.0;
  double total_ms = 0.0;
  bool split_known = true;  // false when phase 3 could not be separated

  static PhaseTimings from(double p1, double p2, double p3, bool split = true) {
    return {p1, p2, p3, p1 + p2 + p3, split};
  }
};

struct ClientConfig {
  const model::RegressionModel* model = nullptr;
  std::uint64_t device_seed = 0;
  std::size_t key_len = 64;
  registry::MacAddress mac;
  std::chrono::milliseconds timeout{2000};
};

struct TransactionResult {
  PhaseTimings timings;
  wire::Digest digest{};
  std::optional<MinerEvent> miner_event;
};

// One client round trip. Throws Error(transport) on timeout and
// Error(authentication_failed) when the miner answers REJECT.
inline TransactionResult run_transaction(const ClientConfig& cfg, const Endpoint& miner,
                                         const MinerNode* local_miner = nullptr) {
  require(cfg.model != nullptr, "client needs a model");
  const auto t0 = Clock::now();
  const model::DeviceKey key = model::derive_key(*cfg.model, cfg.device_seed, cfg.key_len);
  const wire::Frame frame = wire::encode(wire::make_message(cfg.mac, key));
  const wire::Digest digest = wire::hash_message(frame);
  const auto datagram = wire::make_datagram(wire::MsgType::transaction, wire::transaction_payload(frame, digest));
  const auto t1 = Clock::now();

  UdpSocket sock(miner.family());
  sock.send_to(datagram, miner);
  std::optional<wire::Datagram> reply;
  const auto deadline = t1 + cfg.timeout;
  while (!reply) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) fail(ErrorCode::transport, "timed out waiting for miner");
    auto bytes = sock.receive(left);
    if (!bytes) continue;
    try {
      auto dg = wire::parse_datagram(*bytes);
      if (dg.type != wire::MsgType::transaction && std::equal(digest.begin(), digest.end(), dg.payload.begin()))
        reply = std::move(dg);
    } catch (const Error&) {
      // Not ours; keep waiting.
    }
  }
  const auto t3 = Clock::now();

  TransactionResult result;
  result.digest = digest;
  if (local_miner) result.miner_event = local_miner->event_for(digest, std::chrono::milliseconds(500));

  if (reply->type == wire::MsgType::reject) {
    std::string why = "rejected by miner";
    if (result.miner_event) why += ": " + std::string(ledger::to_string(result.miner_event->reason));
    fail(ErrorCode::authentication_failed, why);
  }

  const double p1 = ms_between(t0, t1);
  if (result.miner_event) {
    const auto mined = std::clamp(result.miner_event->mined, t1, t3);
    result.timings = PhaseTimings::from(p1, ms_between(t1, mined), ms_between(mined, t3));
  } else {
    result.timings = PhaseTimings::from(p1, ms_between(t1, t3), 0.0, false);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Timing report

struct PhaseStats {
  double mean = 0.0;
  double stddev = 0.0;
};

struct BenchReport {
  std::size_t runs = 0;
  unsigned difficulty = 0;
  PhaseStats phase1, phase2, phase3, total;
  bool split_known = true;
};

inline PhaseStats stats_of(const std::vector<double>& v) {
  PhaseStats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

inline BenchReport summarize(const std::vector<PhaseTimings>& runs, unsigned difficulty) {
  std::vector<double> p1, p2, p3, tot;
  BenchReport r;
  r.runs = runs.size();
  r.difficulty = difficulty;
  for (const auto& t : runs) {
    p1.push_back(t.phase1_ms);
    p2.push_back(t.phase2_ms);
    p3.push_back(t.phase3_ms);
    tot.push_back(t.total_ms);
    r.split_known = r.split_known && t.split_known;
  }
  r.phase1 = stats_of(p1);
  r.phase2 = stats_of(p2);
  r.phase3 = stats_of(p3);
  r.total = stats_of(tot);
  return r;
}

// Published per-phase reference timings (ms), printed next to local numbers.
inline constexpr double kReferencePhase1Ms = 40.72;
inline constexpr double kReferencePhase2Ms = 9.83;
inline constexpr double kReferencePhase3Ms = 0.22;
inline constexpr double kReferenceTotalMs = 50.77;

inline void write_bench_text(const BenchReport& r, std::ostream& out, bool with_reference = true) {
  auto cell = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
  };
  out << std::left << std::setw(10) << "phase" << std::right << std::setw(14) << "mean_ms" << std::setw(14)
      << "stddev_ms";
  if (with_reference) out << std::setw(14) << "reference_ms";
  out << '\n';
  const std::pair<const char*, std::pair<PhaseStats, double>> rows[] = {
      {"phase1", {r.phase1, kReferencePhase1Ms}},
      {"phase2", {r.phase2, kReferencePhase2Ms}},
      {"phase3", {r.phase3, kReferencePhase3Ms}},
      {"total", {r.total, kReferenceTotalMs}}};
  for (const auto& [name, v] : rows) {
    out << std::left << std::setw(10) << name << std::right << std::setw(14) << cell(v.first.mean) << std::setw(14)
        << cell(v.first.stddev);
    if (with_reference) out << std::setw(14) << cell(v.second);
    out << '\n';
  }
  out << "# runs=" << r.runs << " difficulty=" << r.difficulty;
  if (!r.split_known) out << " (remote miner: phase 3 folded into phase 2)";
  out << '\n';
}

inline void write_bench_csv(const std::vector<PhaseTimings>& runs, std::ostream& out) {
  out << "run,phase1_ms,phase2_ms,phase3_ms,total_ms\n";
  out << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < runs.size(); ++i)
    out << i << ',' << runs[i].phase1_ms << ',' << runs[i].phase2_ms << ',' << runs[i].phase3_ms << ','
        << runs[i].total_ms << '\n';
}

}  // namespace softpuf::node
