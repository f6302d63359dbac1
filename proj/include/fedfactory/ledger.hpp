#pragma once

#include <cstdint>
#include <vector>

namespace fedfactory {

// Communication and compute accounting for one run. Counters only grow.
struct CostLedger {
  std::vector<std::uint32_t> uplink_rounds;  // per client
  std::uint64_t uplink_bytes = 0;
  std::uint64_t downlink_bytes = 0;
  std::uint64_t broadcast_bytes = 0;
  std::uint64_t flops_proxy = 0;

  explicit CostLedger(std::size_t num_clients = 0) : uplink_rounds(num_clients, 0) {}

  void record_uplink(std::size_t client, std::uint64_t bytes) {
    ++uplink_rounds.at(client);
    uplink_bytes += bytes;
  }
  void record_downlink(std::uint64_t bytes) { downlink_bytes += bytes; }
  // One peer-to-peer transmission of `bytes` to each of `peers` receivers.
  void record_broadcast(std::size_t client, std::uint64_t bytes, std::size_t peers) {
    ++uplink_rounds.at(client);
    broadcast_bytes += bytes * peers;
  }
  void record_flops(std::uint64_t n) { flops_proxy += n; }

  std::uint64_t total_bytes() const { return uplink_bytes + downlink_bytes + broadcast_bytes; }
  std::uint32_t max_rounds() const {
    std::uint32_t r = 0;
    for (auto v : uplink_rounds) r = v > r ? v : r;
    return r;
  }
};

}  // namespace fedfactory
