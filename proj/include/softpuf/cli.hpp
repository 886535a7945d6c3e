#pragma once

// Command-line front end. `run()` is the whole program minus process setup,
// so tests can drive it with in-memory streams.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime/protocol error.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "softpuf/bastion.hpp"
#include "softpuf/compare.hpp"
#include "softpuf/dns.hpp"
#include "softpuf/ledger.hpp"
#include "softpuf/model.hpp"
#include "softpuf/node.hpp"
#include "softpuf/puf.hpp"
#include "softpuf/registry.hpp"

namespace softpuf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

namespace detail {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::atomic<bool>& interrupted() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// `--config <file>` holds key=value lines. Keys not already given as flags
// are inserted after the subcommand name, so explicit flags always win.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  auto given = [&](const std::string& key) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
    });
  };
  std::vector<std::string> injected;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line is not key=value: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key == "config" || given(key)) continue;
    if (value == "true") {
      injected.push_back("--" + key);
    } else if (value != "false") {
      injected.push_back("--" + key + "=" + value);
    }
  }
  args.insert(args.begin() + 1, injected.begin(), injected.end());
  return args;
}

// --out goes to a file when given, otherwise to the default stream.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
    if (!*file_) throw UsageError("cannot open " + path + " for writing");
    stream_ = file_.get();
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

inline void print_config(const CLI::App& sub, std::ostream& err) {
  err << "# " << sub.get_name() << " resolved config\n";
  std::istringstream cfg(sub.config_to_str(true, false));
  std::string line;
  while (std::getline(cfg, line))
    if (!line.empty()) err << "#   " << line << '\n';
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::pair<std::string, std::uint16_t> split_host_port(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) return {text, wire::kDefaultMinerPort};
  std::string host = text.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  const std::string port = text.substr(colon + 1);
  unsigned long p = 0;
  try {
    p = std::stoul(port);
  } catch (const std::logic_error&) {
    throw UsageError("bad port in " + text);
  }
  if (p == 0 || p > 65535) throw UsageError("bad port in " + text);
  return {host, static_cast<std::uint16_t>(p)};
}

// Everything a client round trip needs, shared by `transact` and `bench`.
struct ClientOptions {
  std::string mac;
  std::string model_path;
  std::uint64_t seed = 1;
  std::size_t key_len = 64;
  std::string miner;  // empty: in-process loopback miner
  std::string registry_path;
  std::string chain_path;
  unsigned difficulty = 12;
  int timeout_ms = 2000;
  std::string out;
};

inline void add_client_options(CLI::App* sub, ClientOptions& o) {
  sub->add_option("--mac", o.mac, "device MAC address")->required();
  sub->add_option("--model", o.model_path, "trained model file")->required();
  sub->add_option("--seed", o.seed, "device seed used for key derivation")->capture_default_str();
  sub->add_option("--key-len", o.key_len, "key length in bits (1-127)")->capture_default_str();
  sub->add_option("--miner", o.miner, "remote miner host:port; omit to run an in-process loopback miner");
  sub->add_option("--registry", o.registry_path, "registry file for the in-process miner");
  sub->add_option("--chain", o.chain_path, "chain file for the in-process miner");
  sub->add_option("--difficulty", o.difficulty, "difficulty for the in-process miner")->capture_default_str();
  sub->add_option("--timeout-ms", o.timeout_ms, "client timeout")->capture_default_str();
  sub->add_option("--out", o.out, "report file (default stdout)");
}

// Runs `count` transactions against either a remote or an in-process miner.
inline std::vector<node::PhaseTimings> run_client(const ClientOptions& o, std::size_t count, std::ostream& err,
                                                  std::size_t* chain_growth = nullptr) {
  const auto model = model::load_model(o.model_path);
  node::ClientConfig cc;
  cc.model = &model;
  cc.device_seed = o.seed;
  cc.key_len = o.key_len;
  cc.mac = registry::MacAddress::parse(o.mac);
  cc.timeout = std::chrono::milliseconds(o.timeout_ms);

  std::vector<node::PhaseTimings> runs;
  if (!o.miner.empty()) {
    auto [host, port] = split_host_port(o.miner);
    const auto ep = node::Endpoint::resolve(host, port);
    for (std::size_t i = 0; i < count; ++i) runs.push_back(node::run_transaction(cc, ep).timings);
    return runs;
  }

  if (o.registry_path.empty()) throw UsageError("--registry is required without --miner");
  registry::Registry reg(o.registry_path);
  ledger::Chain chain;
  if (!o.chain_path.empty() && std::filesystem::exists(o.chain_path)) chain = ledger::load_chain(o.chain_path);
  const std::size_t before = chain.size();
  node::MinerConfig mc;
  mc.port = 0;
  mc.difficulty = o.difficulty;
  if (!o.chain_path.empty()) mc.chain_path = o.chain_path;
  mc.log = &err;
  node::MinerNode miner(reg, std::move(chain), mc);
  std::jthread server([&miner](std::stop_token st) { miner.serve(st); });
  const auto ep = node::Endpoint::resolve(mc.host, miner.port());
  for (std::size_t i = 0; i < count; ++i) runs.push_back(node::run_transaction(cc, ep, &miner).timings);
  server.request_stop();
  server.join();
  if (chain_growth) *chain_growth = miner.chain().size() - before;
  return runs;
}

}  // namespace detail

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  using detail::UsageError;
  CLI::App app{"SoftPUF simulator: PUF datasets, software PUF models, key-authenticated blockchain, attack simulations"};
  app.require_subcommand(1);
  std::string config_unused;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_unused, "key=value file; flags override");
  };

  // gen-data ---------------------------------------------------------------
  struct {
    std::uint64_t seed = 1;
    std::size_t count = 1000000;
    double sigma = 0.0;
    std::string out;
    bool force = false;
  } gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "simulate an arbiter PUF and write a CRP dataset CSV");
  gen_cmd->add_option("--seed", gen.seed, "PUF seed (challenges use a derived seed)")->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "number of CRPs")->capture_default_str();
  gen_cmd->add_option("--sigma", gen.sigma, "evaluation noise std-dev")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "dataset CSV path")->required();
  gen_cmd->add_flag("--force", gen.force, "overwrite an existing file");
  add_config(gen_cmd);

  // train ------------------------------------------------------------------
  struct {
    std::string data, model = "linear", out;
    std::uint64_t seed = 1;
  } tr;
  auto* train_cmd = app.add_subcommand("train", "train a software PUF model on a CRP dataset");
  train_cmd->add_option("--data", tr.data, "CRP dataset CSV")->required();
  train_cmd->add_option("--model", tr.model, "linear | ridge[:lambda] | knn[:k]")->capture_default_str();
  train_cmd->add_option("--out", tr.out, "model file to write");
  train_cmd->add_option("--seed", tr.seed, "recorded for reproducibility; training is deterministic")->capture_default_str();
  add_config(train_cmd);

  // compare ----------------------------------------------------------------
  struct {
    std::string data, models = "linear,ridge:1,knn:5", annotations, format = "text", out;
    double split = 0.8;
    std::uint64_t seed = 1;
  } cmp;
  auto* compare_cmd = app.add_subcommand("compare", "train several models and compare hold-out metrics");
  compare_cmd->add_option("--data", cmp.data, "CRP dataset CSV")->required();
  compare_cmd->add_option("--models", cmp.models, "comma-separated model specs")->capture_default_str();
  compare_cmd->add_option("--split", cmp.split, "training fraction")->capture_default_str();
  compare_cmd->add_option("--seed", cmp.seed, "train/test split seed")->capture_default_str();
  compare_cmd->add_option("--annotations", cmp.annotations, "CSV of externally reported rows to append");
  compare_cmd->add_option("--format", cmp.format, "stdout format")->check(CLI::IsMember({"text", "csv"}))->capture_default_str();
  compare_cmd->add_option("--out", cmp.out, "also write the table as CSV here");
  add_config(compare_cmd);

  // enroll / revoke ----------------------------------------------------------
  struct {
    std::string registry, mac, model, out;
    std::uint64_t seed = 1;
    std::size_t key_len = 64;
    std::int64_t now = -1;
  } en;
  auto* enroll_cmd = app.add_subcommand("enroll", "derive a device key from the model and enroll it");
  enroll_cmd->add_option("--registry", en.registry, "registry file")->required();
  enroll_cmd->add_option("--mac", en.mac, "device MAC address")->required();
  enroll_cmd->add_option("--model", en.model, "trained model file")->required();
  enroll_cmd->add_option("--seed", en.seed, "device seed used for key derivation")->capture_default_str();
  enroll_cmd->add_option("--key-len", en.key_len, "key length in bits (1-127)")->capture_default_str();
  enroll_cmd->add_option("--now", en.now, "enrollment timestamp (default: current time)");
  enroll_cmd->add_option("--out", en.out, "report file (default stdout)");
  add_config(enroll_cmd);

  struct {
    std::string registry, mac, out;
    std::uint64_t seed = 0;
  } rv;
  auto* revoke_cmd = app.add_subcommand("revoke", "revoke an enrolled device");
  revoke_cmd->add_option("--registry", rv.registry, "registry file")->required();
  revoke_cmd->add_option("--mac", rv.mac, "device MAC address")->required();
  revoke_cmd->add_option("--seed", rv.seed, "unused");
  revoke_cmd->add_option("--out", rv.out, "report file (default stdout)");
  add_config(revoke_cmd);

  // run-miner ----------------------------------------------------------------
  struct {
    std::string registry, chain, host = "127.0.0.1", out;
    std::uint16_t port = wire::kDefaultMinerPort;
    unsigned difficulty = 12, interval = 1, step = 1, max_difficulty = 32;
    bool escalate = false;
    std::size_t max_requests = 0;
    std::uint64_t seed = 0;
  } mn;
  auto* miner_cmd = app.add_subcommand("run-miner", "serve the UDP miner until interrupted");
  miner_cmd->add_option("--registry", mn.registry, "registry file")->required();
  miner_cmd->add_option("--chain", mn.chain, "chain file (created if missing)")->required();
  miner_cmd->add_option("--host", mn.host, "listen address")->capture_default_str();
  miner_cmd->add_option("--port", mn.port, "listen port")->capture_default_str();
  miner_cmd->add_option("--difficulty", mn.difficulty, "leading zero bits per block")->capture_default_str();
  miner_cmd->add_flag("--escalate", mn.escalate, "raise difficulty after every block");
  miner_cmd->add_option("--escalation-interval", mn.interval, "blocks per escalation step")->capture_default_str();
  miner_cmd->add_option("--escalation-step", mn.step, "bits added per step")->capture_default_str();
  miner_cmd->add_option("--max-difficulty", mn.max_difficulty, "escalation cap")->capture_default_str();
  miner_cmd->add_option("--max-requests", mn.max_requests, "exit after this many datagrams (0 = never)")->capture_default_str();
  miner_cmd->add_option("--seed", mn.seed, "unused");
  miner_cmd->add_option("--out", mn.out, "log file (default stderr)");
  add_config(miner_cmd);

  // transact / bench ---------------------------------------------------------
  detail::ClientOptions tx;
  auto* transact_cmd = app.add_subcommand("transact", "run one authenticated transaction");
  detail::add_client_options(transact_cmd, tx);
  add_config(transact_cmd);

  detail::ClientOptions bn;
  std::size_t bench_runs = 100;
  std::string bench_csv;
  auto* bench_cmd = app.add_subcommand("bench", "repeat transactions and report per-phase timing");
  detail::add_client_options(bench_cmd, bn);
  bench_cmd->add_option("--runs", bench_runs, "number of transactions")->capture_default_str();
  bench_cmd->add_option("--csv", bench_csv, "per-run CSV file");
  add_config(bench_cmd);

  // attack-sim ---------------------------------------------------------------
  struct {
    std::string attack, shares = "0.45", network = "10.0.0.0/8", whitelist, mx_fixture, senders, out;
    std::uint64_t trials = 10000, seed = 1, burst = 100;
    unsigned confirmations = 6, initial_difficulty = 12, interval = 1, step = 1, max_difficulty = 32;
    bool distinct_ips = false, live_dns = false;
    double reputation = 0.9, threshold = 0.5;
  } at;
  auto* attack_cmd = app.add_subcommand("attack-sim", "simulate an attack with the defense off and on");
  attack_cmd->add_option("attack", at.attack, "fifty-one | routing | sybil | phishing")
      ->required()
      ->check(CLI::IsMember({"fifty-one", "routing", "sybil", "phishing"}));
  attack_cmd->add_option("--trials", at.trials, "trials (races, packets or senders)")->capture_default_str();
  attack_cmd->add_option("--seed", at.seed, "simulation seed")->capture_default_str();
  attack_cmd->add_option("--share", at.shares, "fifty-one: comma-separated attacker shares")->capture_default_str();
  attack_cmd->add_option("--confirmations", at.confirmations, "fifty-one: confirmation depth")->capture_default_str();
  attack_cmd->add_option("--initial-difficulty", at.initial_difficulty, "fifty-one: starting difficulty")->capture_default_str();
  attack_cmd->add_option("--escalation-interval", at.interval, "fifty-one: blocks per step")->capture_default_str();
  attack_cmd->add_option("--escalation-step", at.step, "fifty-one: bits per step")->capture_default_str();
  attack_cmd->add_option("--max-difficulty", at.max_difficulty, "fifty-one: escalation cap")->capture_default_str();
  attack_cmd->add_option("--network", at.network, "routing: allowed CIDR")->capture_default_str();
  attack_cmd->add_option("--burst", at.burst, "sybil: fake identities")->capture_default_str();
  attack_cmd->add_flag("--distinct-ips", at.distinct_ips, "sybil: give every identity its own address");
  attack_cmd->add_option("--reputation", at.reputation, "sybil: claimed reputation")->capture_default_str();
  attack_cmd->add_option("--threshold", at.threshold, "sybil: admission threshold")->capture_default_str();
  attack_cmd->add_option("--whitelist", at.whitelist, "phishing: whitelist file (one domain per line)");
  attack_cmd->add_option("--mx-fixture", at.mx_fixture, "phishing: MX fixture file (domain,mx1;mx2)");
  attack_cmd->add_option("--senders", at.senders, "phishing: sender file (address,legit|phishing)");
  attack_cmd->add_flag("--live-dns", at.live_dns, "phishing: query real DNS instead of the fixture");
  attack_cmd->add_option("--out", at.out, "CSV file (default stdout)");
  add_config(attack_cmd);

  try {
    args = detail::expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    detail::print_config(*sub, err);

    if (sub == gen_cmd) {
      if (std::filesystem::exists(gen.out) && !gen.force)
        throw UsageError(gen.out + " exists; pass --force to overwrite");
      const auto puf = puf::make_puf(gen.seed, gen.sigma);
      const std::uint64_t challenge_seed = mix_seed(gen.seed, 1);
      err << "#   challenge_seed=" << challenge_seed << '\n';
      puf::save_csv(puf::generate_dataset(puf, gen.count, challenge_seed), gen.out);
      out << "wrote " << gen.count << " CRPs (64-bit challenge, 8-bit response) to " << gen.out << '\n';
    } else if (sub == train_cmd) {
      const auto ds = puf::load_csv(tr.data);
      const auto spec = model::parse_spec(tr.model);
      const auto m = model::train(ds, spec.kind, spec.hyper);
      if (!tr.out.empty()) model::save_model(m, tr.out);
      model::ComparisonTable t;
      t.train_rows = ds.rows.size();
      t.rows.push_back(model::ComparisonRow::from(spec.label() + " (train)", model::evaluate_model(m, ds)));
      model::write_comparison_text(t, out);
      if (m.used_min_norm) out << "# normal matrix singular: minimum-norm solution used\n";
      if (!tr.out.empty()) out << "model written to " << tr.out << '\n';
    } else if (sub == compare_cmd) {
      const auto ds = puf::load_csv(cmp.data);
      std::vector<model::ModelSpec> specs;
      for (const auto& s : detail::split_list(cmp.models)) specs.push_back(model::parse_spec(s));
      auto table = model::compare_models(ds, specs, cmp.split, cmp.seed);
      if (!cmp.annotations.empty())
        for (auto& row : model::load_annotations(cmp.annotations)) table.rows.push_back(std::move(row));
      if (cmp.format == "csv")
        model::write_comparison_csv(table, out);
      else
        model::write_comparison_text(table, out);
      if (!cmp.out.empty()) {
        detail::Output o(cmp.out, out);
        model::write_comparison_csv(table, *o);
      }
    } else if (sub == enroll_cmd) {
      const auto m = model::load_model(en.model);
      const auto key = model::derive_key(m, en.seed, en.key_len);
      registry::Registry reg(en.registry);
      const std::int64_t now = en.now >= 0 ? en.now : static_cast<std::int64_t>(std::time(nullptr));
      const auto id = reg.enroll(registry::MacAddress::parse(en.mac), key, now);
      detail::Output o(en.out, out);
      *o << "enrolled " << registry::format_record(id) << '\n';
    } else if (sub == revoke_cmd) {
      registry::Registry reg(rv.registry);
      reg.revoke(registry::MacAddress::parse(rv.mac));
      detail::Output o(rv.out, out);
      *o << "revoked " << rv.mac << '\n';
    } else if (sub == miner_cmd) {
      registry::Registry reg(mn.registry);
      ledger::Chain chain;
      if (std::filesystem::exists(mn.chain))
        chain = ledger::load_chain(mn.chain);
      else
        ledger::save_chain(chain, mn.chain);
      detail::Output log(mn.out, err);
      node::MinerConfig mc;
      mc.host = mn.host;
      mc.port = mn.port;
      mc.difficulty = mn.difficulty;
      mc.chain_path = mn.chain;
      mc.log = &*log;
      if (mn.escalate) {
        bastion::DefenseConfig dc;
        dc.escalation_interval_blocks = mn.interval;
        dc.escalation_step_bits = mn.step;
        dc.max_difficulty = mn.max_difficulty;
        dc.validate();
        mc.escalation = dc;
      }
      node::MinerNode miner(reg, std::move(chain), mc);
      *log << "[miner] listening on " << mn.host << ':' << miner.port() << std::endl;
      detail::interrupted() = false;
      auto previous = std::signal(SIGINT, [](int) { detail::interrupted() = true; });
      std::size_t handled = 0;
      while (!detail::interrupted() && (mn.max_requests == 0 || handled < mn.max_requests))
        if (miner.serve_once(std::chrono::milliseconds(100))) ++handled;
      std::signal(SIGINT, previous);
      *log << "[miner] stopped after " << handled << " datagrams; chain height " << miner.chain().size() - 1
           << std::endl;
    } else if (sub == transact_cmd) {
      std::size_t growth = 0;
      const auto runs = detail::run_client(tx, 1, err, &growth);
      detail::Output o(tx.out, out);
      *o << "accepted\n";
      node::write_bench_text(node::summarize(runs, tx.difficulty), *o, false);
      if (tx.miner.empty()) *o << "# chain grew by " << growth << '\n';
    } else if (sub == bench_cmd) {
      if (bench_runs == 0) throw UsageError("--runs must be at least 1");
      const auto runs = detail::run_client(bn, bench_runs, err);
      detail::Output o(bn.out, out);
      node::write_bench_text(node::summarize(runs, bn.difficulty), *o, true);
      if (!bench_csv.empty()) {
        detail::Output csv(bench_csv, out);
        node::write_bench_csv(runs, *csv);
      }
    } else if (sub == attack_cmd) {
      std::vector<bastion::AttackRow> rows;
      bastion::DefenseConfig dc;
      dc.escalation_interval_blocks = at.interval;
      dc.escalation_step_bits = at.step;
      dc.max_difficulty = at.max_difficulty;
      dc.allowed_network = at.network;
      dc.reputation_threshold = at.threshold;
      dc.validate();

      if (at.attack == "fifty-one") {
        for (const auto& s : detail::split_list(at.shares)) {
          bastion::RaceParams rp;
          try {
            rp.attacker_share = std::stod(s);
          } catch (const std::logic_error&) {
            throw UsageError("bad share '" + s + "'");
          }
          rp.confirmations = at.confirmations;
          rp.initial_difficulty = at.initial_difficulty;
          const std::string param = "share=" + s + ";confirmations=" + std::to_string(at.confirmations);
          for (bool on : {false, true})
            rows.push_back({"fifty-one", param, on, bastion::simulate_51(rp, at.trials, on, at.seed, dc)});
        }
      } else if (at.attack == "routing") {
        const auto net = bastion::Cidr::parse(at.network);
        const auto packets = bastion::make_packets(net, at.trials, at.seed);
        for (bool on : {false, true})
          rows.push_back({"routing", "network=" + at.network, on, bastion::simulate_routing(packets, net, on)});
      } else if (at.attack == "sybil") {
        std::vector<bastion::Node> honest;
        for (int i = 1; i <= 10; ++i) honest.push_back({"honest-" + std::to_string(i), "10.0.0." + std::to_string(i), 0.9});
        const auto burst = bastion::make_sybil_burst(at.burst, !at.distinct_ips, at.reputation);
        const std::string param = "burst=" + std::to_string(at.burst) + (at.distinct_ips ? ";distinct-ip" : ";shared-ip");
        for (bool on : {false, true}) {
          auto outcome = bastion::simulate_sybil(burst, honest, on, dc);
          err << "# sybil defense=" << (on ? "on" : "off") << " admitted=" << outcome.successes
              << " denied=" << outcome.trials - outcome.successes << '\n';
          rows.push_back({"sybil", param, on, outcome});
        }
      } else {
        dc.domain_whitelist = at.whitelist.empty() ? std::set<std::string>{"trusted.example", "partner.example"}
                                                   : bastion::load_whitelist(at.whitelist);
        bastion::FixtureResolver fixture =
            at.mx_fixture.empty()
                ? bastion::FixtureResolver(std::map<std::string, std::vector<std::string>>{{"trusted.example", {"mx1.trusted.example"}}})
                : bastion::FixtureResolver::load(at.mx_fixture);
        bastion::MxResolver resolver = at.live_dns ? bastion::MxResolver(dns::resolve_mx) : bastion::MxResolver(fixture);
        std::vector<bastion::Sender> senders;
        if (!at.senders.empty()) {
          std::ifstream in(at.senders);
          if (!in) throw UsageError("cannot open " + at.senders);
          std::string line;
          while (std::getline(in, line)) {
            line = detail::trim(line);
            if (line.empty() || line[0] == '#') continue;
            const auto comma = line.rfind(',');
            if (comma == std::string::npos) throw UsageError("sender line needs address,label: " + line);
            const std::string label = line.substr(comma + 1);
            if (label != "legit" && label != "phishing") throw UsageError("sender label must be legit or phishing");
            senders.push_back({line.substr(0, comma), label == "phishing"});
          }
        } else {
          // Legitimate mail, look-alike domains, a whitelisted domain with no
          // mail servers (spoofed), and malformed addresses.
          Rng rng(at.seed);
          for (std::uint64_t i = 0; i < at.trials; ++i) {
            const std::string user = "user" + std::to_string(rng() % 10000);
            switch (rng() % 4) {
              case 0: senders.push_back({user + "@trusted.example", false}); break;
              case 1: senders.push_back({user + "@trusted-example.com", true}); break;
              case 2: senders.push_back({user + "@partner.example", true}); break;
              default: senders.push_back({user + ".trusted.example", true});
            }
          }
        }
        for (bool on : {false, true})
          rows.push_back({"phishing", "senders=" + std::to_string(senders.size()), on,
                          bastion::simulate_phishing(senders, dc, resolver, on)});
      }
      detail::Output o(at.out, out);
      bastion::write_attack_csv(rows, *o);
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::invalid_parameter || e.code() == ErrorCode::io ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace softpuf::cli
