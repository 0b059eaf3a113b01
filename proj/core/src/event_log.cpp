#include "dsmcsg/event_log.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "dsmcsg/error.hpp"

namespace dsmcsg {

static_assert(std::endian::native == std::endian::little, "event log I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'S', 'M', 'C', 'S', 'G', 'L', 'G'};
constexpr char kTrailer[8] = {'D', 'S', 'M', 'C', 'S', 'G', 'E', 'N'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw ReplayError(std::string("event log truncated while reading ") + what);
  return v;
}

}  // namespace

bool EventLog::complete() const {
  if (initial.size() != header.n) return false;
  if (header.outer_steps == 0) return true;
  if (records.empty()) return false;
  std::uint64_t expected = 0;
  for (const auto& r : records) {
    if (r.step == expected) continue;
    if (r.step != expected + 1) return false;
    ++expected;
  }
  return records.front().step == 0 && expected + 1 == header.outer_steps;
}

std::size_t EventLog::total_events() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.events.size();
  return n;
}

void EventLog::write(std::ostream& os) const {
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kEventLogVersion);
  put<std::uint64_t>(os, header.seed);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(header.model));
  put<std::uint64_t>(os, header.n);
  put<double>(os, header.dt);
  put<double>(os, header.epsilon);
  put<std::uint64_t>(os, header.outer_steps);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(header.dims.size()));
  for (std::size_t d = 0; d < header.dims.size(); ++d) {
    put<double>(os, header.dims[d].lo);
    put<double>(os, header.dims[d].hi);
    put<std::int32_t>(os, header.orders.at(d));
    put<std::int32_t>(os, header.nq.at(d));
  }
  put<std::uint32_t>(os, static_cast<std::uint32_t>(header.mode));
  put<double>(os, header.beta);
  put<std::uint8_t>(os, header.rescale ? static_cast<std::uint8_t>(1 + header.rescale_form) : 0);
  for (double v : initial) put<double>(os, v);
  put<std::uint64_t>(os, records.size());
  for (const auto& r : records) {
    put<std::uint64_t>(os, r.step);
    put<std::uint32_t>(os, r.substep);
    put<double>(os, r.h);
    put<double>(os, r.sigma);
    put<std::uint64_t>(os, r.events.size());
    for (const auto& e : r.events) {
      put<std::uint32_t>(os, e.i);
      put<std::uint32_t>(os, e.j);
      put<double>(os, e.xi);
      put<double>(os, e.eta);
      put<double>(os, e.extra);
    }
  }
  os.write(kTrailer, sizeof kTrailer);
  if (!os) throw Error("event log: write failed");
}

void EventLog::write_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("event log: cannot open '" + path + "' for writing");
  write(os);
}

EventLog EventLog::read(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw ReplayError("event log: bad magic");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kEventLogVersion)
    throw ReplayError("event log: unsupported version " + std::to_string(version));
  EventLog log;
  auto& h = log.header;
  h.seed = get<std::uint64_t>(is, "seed");
  const auto kind = get<std::uint32_t>(is, "model");
  if (kind > 2) throw ReplayError("event log: unknown model id " + std::to_string(kind));
  h.model = static_cast<ModelKind>(kind);
  h.n = get<std::uint64_t>(is, "N");
  h.dt = get<double>(is, "dt");
  h.epsilon = get<double>(is, "epsilon");
  h.outer_steps = get<std::uint64_t>(is, "step count");
  const auto nd = get<std::uint32_t>(is, "dims");
  if (nd == 0 || nd > 16) throw ReplayError("event log: implausible dimension count");
  for (std::uint32_t d = 0; d < nd; ++d) {
    UniformDim u;
    u.lo = get<double>(is, "basis lo");
    u.hi = get<double>(is, "basis hi");
    h.dims.push_back(u);
    h.orders.push_back(get<std::int32_t>(is, "basis order"));
    h.nq.push_back(get<std::int32_t>(is, "basis nq"));
  }
  const auto mode = get<std::uint32_t>(is, "mode");
  if (mode > 1) throw ReplayError("event log: unknown acceptance mode");
  h.mode = static_cast<AcceptanceMode>(mode);
  h.beta = get<double>(is, "beta");
  const auto rescale = get<std::uint8_t>(is, "rescale flag");
  if (rescale > 2) throw ReplayError("event log: unknown rescale form");
  h.rescale = rescale != 0;
  h.rescale_form = rescale == 0 ? 0 : rescale - 1u;
  log.initial.resize(h.n);
  for (auto& v : log.initial) v = get<double>(is, "initial states");
  const auto nrec = get<std::uint64_t>(is, "record count");
  log.records.reserve(nrec);
  for (std::uint64_t r = 0; r < nrec; ++r) {
    StepRecord rec;
    rec.step = get<std::uint64_t>(is, "record step");
    rec.substep = get<std::uint32_t>(is, "record substep");
    rec.h = get<double>(is, "record h");
    rec.sigma = get<double>(is, "record sigma");
    const auto ne = get<std::uint64_t>(is, "event count");
    if (ne > h.n) throw ReplayError("event log: record has more events than particles");
    rec.events.resize(ne);
    for (auto& e : rec.events) {
      e.i = get<std::uint32_t>(is, "event i");
      e.j = get<std::uint32_t>(is, "event j");
      e.xi = get<double>(is, "event xi");
      e.eta = get<double>(is, "event eta");
      e.extra = get<double>(is, "event extra");
    }
    log.records.push_back(std::move(rec));
  }
  char trailer[8];
  if (!is.read(trailer, sizeof trailer) || std::memcmp(trailer, kTrailer, sizeof trailer) != 0)
    throw ReplayError("event log: missing end marker (incomplete file)");
  if (!log.complete()) throw ReplayError("event log: records do not cover every outer step");
  return log;
}

EventLog EventLog::read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ReplayError("event log: cannot open '" + path + "'");
  return read(is);
}

}  // namespace dsmcsg
