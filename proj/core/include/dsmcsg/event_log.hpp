#pragma once

// Record of every stochastic choice made by a DSMC run.
//
// File layout (little endian, version 1):
//   "DSMCSGLG" u32 version
//   u64 seed, u32 model kind, u64 N, f64 dt, f64 epsilon, u64 outer steps
//   u32 dims, then per dim: f64 lo, f64 hi, i32 order, i32 nq
//   u32 acceptance mode, f64 beta, u8 rescale (0 off, 1 variance matching, 2 literal)
//   N x f64 initial states
//   u64 record count, then per record:
//     u64 step, u32 substep, f64 h, f64 sigma, u64 events,
//     events x (u32 i, u32 j, f64 xi, f64 eta, f64 extra)
//   "DSMCSGEN"
// A background partner (wealth model) is stored as j = 0xFFFFFFFF.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dsmcsg/gpc.hpp"
#include "dsmcsg/models.hpp"

namespace dsmcsg {

enum class AcceptanceMode : std::uint32_t { indicator = 0, sigmoid = 1 };

inline constexpr std::uint32_t kBackgroundPartner = 0xFFFFFFFFu;
inline constexpr std::uint32_t kEventLogVersion = 1;

struct CollisionEvent {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  double xi = 0.0;
  double eta = 0.0;
  double extra = 0.0;

  friend bool operator==(const CollisionEvent&, const CollisionEvent&) = default;
};

struct StepRecord {
  std::uint64_t step = 0;
  std::uint32_t substep = 0;
  double h = 0.0;
  double sigma = 0.0;
  std::vector<CollisionEvent> events;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EventLogHeader {
  std::uint64_t seed = 0;
  ModelKind model = ModelKind::gambling;
  std::uint64_t n = 0;
  double dt = 0.0;
  double epsilon = 1.0;
  std::uint64_t outer_steps = 0;
  std::vector<UniformDim> dims;
  std::vector<int> orders;
  std::vector<int> nq;
  AcceptanceMode mode = AcceptanceMode::indicator;
  double beta = 0.0;
  bool rescale = false;
  std::uint32_t rescale_form = 0;

  friend bool operator==(const EventLogHeader&, const EventLogHeader&) = default;
};

struct EventLog {
  EventLogHeader header;
  std::vector<double> initial;
  std::vector<StepRecord> records;

  /// True when the records cover every outer step announced in the header.
  bool complete() const;
  std::size_t total_events() const;

  void write(std::ostream& os) const;
  void write_file(const std::string& path) const;
  static EventLog read(std::istream& is);
  static EventLog read_file(const std::string& path);

  friend bool operator==(const EventLog&, const EventLog&) = default;
};

}  // namespace dsmcsg
