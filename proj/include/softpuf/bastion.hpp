#pragma once

// Defenses against the four attack classes and the adversary simulations
// that measure them:
//   51%      difficulty escalation eroding a fixed-power attacker's share
//   routing  destination validation against an allowed network
//   Sybil    node admission by unique id, unique valid ip and reputation
//   phishing sender-domain whitelist corroborated by MX records

#include <arpa/inet.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "softpuf/error.hpp"
#include "softpuf/rng.hpp"

namespace softpuf::bastion {

struct DefenseConfig {
  unsigned escalation_interval_blocks = 1;
  unsigned escalation_step_bits = 1;
  unsigned max_difficulty = 32;
  std::set<std::string> domain_whitelist;
  std::string allowed_network = "10.0.0.0/8";
  double reputation_threshold = 0.5;

  void validate() const {
    require(escalation_interval_blocks >= 1, "escalation interval must be positive");
    require(escalation_step_bits >= 1, "escalation step must be positive");
    require(max_difficulty <= 32, "max difficulty must be at most 32");
    require(reputation_threshold >= 0.0 && reputation_threshold <= 1.0, "reputation threshold must be in [0, 1]");
  }
};

struct AttackOutcome {
  std::uint64_t trials = 0;
  std::uint64_t successes = 0;

  double success_rate() const { return trials == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(trials); }
};

// ---------------------------------------------------------------------------
// 51%: difficulty escalation

inline unsigned escalate_difficulty(unsigned initial, std::uint64_t blocks_since_start, const DefenseConfig& cfg) {
  require(initial <= cfg.max_difficulty, "initial difficulty above max_difficulty");
  require(cfg.escalation_interval_blocks >= 1, "escalation interval must be positive");
  const std::uint64_t steps = blocks_since_start / cfg.escalation_interval_blocks;
  const std::uint64_t headroom = cfg.max_difficulty - initial;
  // Saturate before multiplying so huge block counts cannot overflow.
  if (steps >= headroom || steps * cfg.escalation_step_bits >= headroom) return cfg.max_difficulty;
  return initial + static_cast<unsigned>(steps * cfg.escalation_step_bits);
}

struct RaceParams {
  double attacker_share = 0.3;
  unsigned confirmations = 6;
  unsigned initial_difficulty = 12;
  // Blocks simulated beyond the confirmation depth before the race is
  // declared lost.
  unsigned horizon_extra = 50;
};

// Attacker's share of the next block once the honest network has escalated
// difficulty by `extra_bits` while the attacker's hash power stays fixed.
inline double effective_share(double share, unsigned extra_bits) {
  const double weakened = share * std::ldexp(1.0, -static_cast<int>(extra_bits));
  return weakened / (weakened + (1.0 - share));
}

// Private-chain race. Each new block is the attacker's with probability q
// (the effective share), otherwise honest. The attacker wins once its chain
// is strictly longer than the honest one and at least confirmations + 1
// blocks long; the race gives up after confirmations + horizon_extra blocks.
// Each trial draws from its own stream seeded by (seed, trial), so the same
// seed pairs defense-on and defense-off runs block by block.
inline AttackOutcome simulate_51(const RaceParams& p, std::uint64_t trials, bool defense_on, std::uint64_t seed,
                                 const DefenseConfig& cfg = {}) {
  require(p.attacker_share > 0.0 && p.attacker_share < 1.0, "attacker share must be in (0, 1)");
  require(trials >= 1, "trials must be at least 1");
  cfg.validate();
  require(p.initial_difficulty <= cfg.max_difficulty, "initial difficulty above max_difficulty");

  const unsigned horizon = p.confirmations + p.horizon_extra;
  std::vector<double> share_at(horizon);
  for (unsigned n = 0; n < horizon; ++n) {
    const unsigned extra = escalate_difficulty(p.initial_difficulty, n, cfg) - p.initial_difficulty;
    share_at[n] = defense_on ? effective_share(p.attacker_share, extra) : p.attacker_share;
  }

  AttackOutcome out{trials, 0};
  for (std::uint64_t t = 0; t < trials; ++t) {
    Rng rng(mix_seed(seed, t));
    unsigned attacker = 0, honest = 0;
    for (unsigned n = 0; n < horizon; ++n) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      if (u < share_at[n])
        ++attacker;
      else
        ++honest;
      if (attacker > honest && attacker >= p.confirmations + 1) {
        ++out.successes;
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Routing

struct IpAddress {
  int family = AF_INET;  // AF_INET or AF_INET6
  std::array<std::uint8_t, 16> bytes{};

  std::size_t width_bits() const { return family == AF_INET ? 32 : 128; }
  friend bool operator==(const IpAddress&, const IpAddress&) = default;

  std::string to_string() const {
    char buf[INET6_ADDRSTRLEN] = {};
    inet_ntop(family, bytes.data(), buf, sizeof buf);
    return buf;
  }
};

inline std::optional<IpAddress> parse_ip(const std::string& text) {
  IpAddress ip;
  if (inet_pton(AF_INET, text.c_str(), ip.bytes.data()) == 1) {
    ip.family = AF_INET;
    return ip;
  }
  ip.bytes = {};
  if (inet_pton(AF_INET6, text.c_str(), ip.bytes.data()) == 1) {
    ip.family = AF_INET6;
    return ip;
  }
  return std::nullopt;
}

inline bool is_valid_destination(const std::string& ip_text) { return parse_ip(ip_text).has_value(); }

struct Cidr {
  IpAddress base;
  unsigned prefix = 0;

  static Cidr parse(const std::string& text) {
    const auto slash = text.find('/');
    require(slash != std::string::npos, "CIDR needs a '/prefix': " + text);
    auto ip = parse_ip(text.substr(0, slash));
    require(ip.has_value(), "CIDR base is not an IP address: " + text);
    const std::string len = text.substr(slash + 1);
    require(!len.empty() && len.size() <= 3 && std::all_of(len.begin(), len.end(), ::isdigit), "bad CIDR prefix: " + text);
    Cidr c{*ip, static_cast<unsigned>(std::stoul(len))};
    require(c.prefix <= c.base.width_bits(), "CIDR prefix too long: " + text);
    return c;
  }

  bool contains(const IpAddress& ip) const {
    if (ip.family != base.family) return false;
    for (unsigned bit = 0; bit < prefix; ++bit) {
      const auto mask = static_cast<std::uint8_t>(0x80U >> (bit % 8));
      if ((ip.bytes[bit / 8] & mask) != (base.bytes[bit / 8] & mask)) return false;
    }
    return true;
  }
};

enum class DropReason { none, invalid_address, out_of_range };

inline std::string_view to_string(DropReason r) {
  switch (r) {
    case DropReason::none: return "routed";
    case DropReason::invalid_address: return "invalid-address";
    case DropReason::out_of_range: return "out-of-range";
  }
  return "unknown";
}

struct RouteDecision {
  DropReason reason = DropReason::none;
  bool routed() const { return reason == DropReason::none; }
};

// The source address is informational only; routing is decided on the
// destination.
inline RouteDecision route_packet(const std::string& /*src_ip*/, const std::string& dst_ip, const Cidr& allowed) {
  auto dst = parse_ip(dst_ip);
  if (!dst) return {DropReason::invalid_address};
  if (!allowed.contains(*dst)) return {DropReason::out_of_range};
  return {DropReason::none};
}

// ---------------------------------------------------------------------------
// Sybil

struct Node {
  std::string node_id;
  std::string ip;
  double reputation = 0.0;
};

enum class DenyReason { none, duplicate_id, invalid_ip, duplicate_ip, low_reputation };

inline std::string_view to_string(DenyReason r) {
  switch (r) {
    case DenyReason::none: return "admit";
    case DenyReason::duplicate_id: return "duplicate-id";
    case DenyReason::invalid_ip: return "invalid-ip";
    case DenyReason::duplicate_ip: return "duplicate-ip";
    case DenyReason::low_reputation: return "low-reputation";
  }
  return "unknown";
}

struct Admission {
  DenyReason reason = DenyReason::none;
  bool admitted() const { return reason == DenyReason::none; }
};

// IPs are compared by parsed address, so "::1" and "0:0::1" collide.
inline Admission validate_node(const Node& node, const std::vector<Node>& known, const DefenseConfig& cfg) {
  for (const auto& k : known)
    if (k.node_id == node.node_id) return {DenyReason::duplicate_id};
  auto ip = parse_ip(node.ip);
  if (!ip) return {DenyReason::invalid_ip};
  for (const auto& k : known)
    if (auto kip = parse_ip(k.ip); kip && *kip == *ip) return {DenyReason::duplicate_ip};
  if (!(node.reputation >= cfg.reputation_threshold)) return {DenyReason::low_reputation};
  return {DenyReason::none};
}

struct AdmissionTally {
  std::uint64_t admitted = 0;
  std::uint64_t denied = 0;
  std::map<DenyReason, std::uint64_t> by_reason;
};

// Admits candidates one at a time into `known`.
inline AdmissionTally admit_sequentially(const std::vector<Node>& candidates, std::vector<Node>& known,
                                         const DefenseConfig& cfg) {
  AdmissionTally tally;
  for (const auto& c : candidates) {
    const Admission a = validate_node(c, known, cfg);
    if (a.admitted()) {
      known.push_back(c);
      ++tally.admitted;
    } else {
      ++tally.denied;
      ++tally.by_reason[a.reason];
    }
  }
  return tally;
}

// ---------------------------------------------------------------------------
// Phishing

// Domain -> MX host list. May throw Error(resolver_unavailable).
using MxResolver = std::function<std::vector<std::string>(const std::string& domain)>;

enum class FlagReason { none, malformed_address, not_whitelisted, no_mx };

inline std::string_view to_string(FlagReason r) {
  switch (r) {
    case FlagReason::none: return "pass";
    case FlagReason::malformed_address: return "malformed-address";
    case FlagReason::not_whitelisted: return "not-whitelisted";
    case FlagReason::no_mx: return "no-mx";
  }
  return "unknown";
}

struct SenderCheck {
  FlagReason reason = FlagReason::none;
  bool passed() const { return reason == FlagReason::none; }
};

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Only the domain part is inspected; it is compared case-insensitively.
inline std::optional<std::string> sender_domain(const std::string& address) {
  const auto at = address.find('@');
  if (at == std::string::npos || at == 0 || at + 1 >= address.size()) return std::nullopt;
  if (address.find('@', at + 1) != std::string::npos) return std::nullopt;
  std::string domain = lowercase(address.substr(at + 1));
  if (domain.front() == '.' || domain.back() == '.' || domain.find("..") != std::string::npos) return std::nullopt;
  for (char c : domain)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.')) return std::nullopt;
  for (char c : address.substr(0, at))
    if (std::isspace(static_cast<unsigned char>(c))) return std::nullopt;
  return domain;
}

inline SenderCheck check_sender(const std::string& address, const DefenseConfig& cfg, const MxResolver& resolver) {
  require(static_cast<bool>(resolver), "an MX resolver is required");
  auto domain = sender_domain(address);
  if (!domain) return {FlagReason::malformed_address};
  bool listed = false;
  for (const auto& w : cfg.domain_whitelist) listed = listed || lowercase(w) == *domain;
  if (!listed) return {FlagReason::not_whitelisted};
  std::vector<std::string> mx;
  try {
    mx = resolver(*domain);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::resolver_unavailable, e.what());
  }
  if (mx.empty()) return {FlagReason::no_mx};
  return {FlagReason::none};
}

// MX fixture file: `domain,mx1;mx2;...`. Unlisted domains have no records.
class FixtureResolver {
 public:
  FixtureResolver() = default;
  explicit FixtureResolver(std::map<std::string, std::vector<std::string>> table) : table_(std::move(table)) {}

  static FixtureResolver parse(std::istream& in) {
    std::map<std::string, std::vector<std::string>> table;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto comma = line.find(',');
      require(comma != std::string::npos && comma > 0, "bad MX fixture line: " + line);
      auto& hosts = table[lowercase(line.substr(0, comma))];
      std::stringstream ss(line.substr(comma + 1));
      std::string host;
      while (std::getline(ss, host, ';'))
        if (!host.empty()) hosts.push_back(host);
    }
    return FixtureResolver(std::move(table));
  }

  static FixtureResolver load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io, "cannot open " + path);
    return parse(in);
  }

  std::vector<std::string> operator()(const std::string& domain) const {
    auto it = table_.find(lowercase(domain));
    return it == table_.end() ? std::vector<std::string>{} : it->second;
  }

 private:
  std::map<std::string, std::vector<std::string>> table_;
};

inline std::set<std::string> load_whitelist(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line.erase(std::remove_if(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }), line.end());
    if (!line.empty() && line[0] != '#') out.insert(lowercase(line));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scenario simulations for the routing, Sybil and phishing defenses. With the
// defense off every packet is routed, every node admitted and every sender
// passed; a success is a malicious item that got through.

inline IpAddress random_address_in(const Cidr& net, Rng& rng, bool inside) {
  for (;;) {
    IpAddress ip = net.base;
    for (auto& b : ip.bytes) b = static_cast<std::uint8_t>(rng());
    if (ip.family == AF_INET)
      for (std::size_t i = 4; i < 16; ++i) ip.bytes[i] = 0;
    if (inside)
      for (unsigned bit = 0; bit < net.prefix; ++bit) {
        const auto mask = static_cast<std::uint8_t>(0x80U >> (bit % 8));
        ip.bytes[bit / 8] = static_cast<std::uint8_t>((ip.bytes[bit / 8] & ~mask) | (net.base.bytes[bit / 8] & mask));
      }
    if (net.contains(ip) == inside) return ip;
  }
}

struct Packet {
  std::string src, dst;
  bool malicious = false;
};

// Each packet is legitimate (inside the network), hijacked (outside) or
// malformed with equal probability.
inline std::vector<Packet> make_packets(const Cidr& net, std::uint64_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Packet> out;
  const std::string src = random_address_in(net, rng, true).to_string();
  for (std::uint64_t i = 0; i < count; ++i) {
    switch (rng() % 3) {
      case 0: out.push_back({src, random_address_in(net, rng, true).to_string(), false}); break;
      case 1: out.push_back({src, random_address_in(net, rng, false).to_string(), true}); break;
      default: out.push_back({src, std::to_string(256 + rng() % 700) + ".0.0." + std::to_string(rng() % 256), true});
    }
  }
  return out;
}

inline AttackOutcome simulate_routing(const std::vector<Packet>& packets, const Cidr& net, bool defense_on) {
  AttackOutcome out;
  for (const auto& p : packets) {
    if (!p.malicious) continue;
    ++out.trials;
    if (!defense_on || route_packet(p.src, p.dst, net).routed()) ++out.successes;
  }
  return out;
}

// `burst` fresh identities behind one shared address (or distinct addresses
// when shared_ip is false), each claiming `reputation`.
inline std::vector<Node> make_sybil_burst(std::uint64_t burst, bool shared_ip, double reputation) {
  std::vector<Node> out;
  for (std::uint64_t i = 0; i < burst; ++i) {
    const std::uint64_t host = shared_ip ? 1 : i + 1;
    out.push_back({"sybil-" + std::to_string(i),
                   "172.16." + std::to_string((host >> 8) & 0xff) + '.' + std::to_string(host & 0xff), reputation});
  }
  return out;
}

inline AttackOutcome simulate_sybil(const std::vector<Node>& burst, std::vector<Node> known, bool defense_on,
                                    const DefenseConfig& cfg) {
  AttackOutcome out{burst.size(), 0};
  if (!defense_on) {
    out.successes = burst.size();
    return out;
  }
  out.successes = admit_sequentially(burst, known, cfg).admitted;
  return out;
}

struct Sender {
  std::string address;
  bool phishing = false;
};

inline AttackOutcome simulate_phishing(const std::vector<Sender>& senders, const DefenseConfig& cfg,
                                       const MxResolver& resolver, bool defense_on) {
  AttackOutcome out;
  for (const auto& s : senders) {
    if (!s.phishing) continue;
    ++out.trials;
    if (!defense_on || check_sender(s.address, cfg, resolver).passed()) ++out.successes;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV report: attack,param,defense,trials,successes,rate

struct AttackRow {
  std::string attack;
  std::string param;
  bool defense = false;
  AttackOutcome outcome;
};

inline constexpr std::string_view kAttackCsvHeader = "attack,param,defense,trials,successes,rate";

inline void write_attack_csv(const std::vector<AttackRow>& rows, std::ostream& out) {
  out << kAttackCsvHeader << '\n';
  for (const auto& r : rows) {
    std::ostringstream rate;
    rate.setf(std::ios::fixed);
    rate.precision(6);
    rate << r.outcome.success_rate();
    out << r.attack << ',' << r.param << ',' << (r.defense ? "on" : "off") << ',' << r.outcome.trials << ','
        << r.outcome.successes << ',' << rate.str() << '\n';
  }
}

}  // namespace softpuf::bastion
