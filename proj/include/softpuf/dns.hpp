#pragma once

// Live MX lookup through the system resolver (link with -lresolv). Only the
// CLI uses this, and only when asked to; tests use FixtureResolver.

#include <arpa/nameser.h>
#include <netdb.h>
#include <netinet/in.h>
#include <resolv.h>

#include <array>
#include <string>
#include <vector>

#include "softpuf/error.hpp"

namespace softpuf::dns {

inline std::vector<std::string> resolve_mx(const std::string& domain) {
  std::array<unsigned char, 4096> answer{};
  const int len = res_query(domain.c_str(), ns_c_in, ns_t_mx, answer.data(), static_cast<int>(answer.size()));
  if (len < 0) {
    // NXDOMAIN / NODATA mean "no MX records"; anything else is a resolver fault.
    if (h_errno == HOST_NOT_FOUND || h_errno == NO_DATA) return {};
    fail(ErrorCode::resolver_unavailable, "MX query for " + domain + " failed (h_errno " + std::to_string(h_errno) + ")");
  }
  ns_msg msg;
  if (ns_initparse(answer.data(), len, &msg) != 0) fail(ErrorCode::resolver_unavailable, "unparseable DNS answer");
  std::vector<std::string> out;
  for (int i = 0; i < ns_msg_count(msg, ns_s_an); ++i) {
    ns_rr rr;
    if (ns_parserr(&msg, ns_s_an, i, &rr) != 0 || ns_rr_type(rr) != ns_t_mx) continue;
    std::array<char, NS_MAXDNAME> name{};
    if (dn_expand(ns_msg_base(msg), ns_msg_end(msg), ns_rr_rdata(rr) + 2, name.data(), name.size()) >= 0)
      out.emplace_back(name.data());
  }
  return out;
}

}  // namespace softpuf::dns
