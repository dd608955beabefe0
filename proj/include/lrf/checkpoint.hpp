#pragma once

// Checkpoint file:
//   "LRF1" | u64 n + n bytes of spec JSON | u64 param count |
//   per param: u64 n + name | u32 rank (3) | rank x u64 dims | float64 values
// All integers little-endian.

#include <cstring>
#include <string>

#include "lrf/binary_io.hpp"
#include "lrf/network.hpp"

namespace lrf {

inline constexpr char kCheckpointMagic[4] = {'L', 'R', 'F', '1'};

struct Checkpoint {
  NetworkSpec spec;
  ParamStore<double> params;
};

template <typename T>
Checkpoint make_checkpoint(const NetworkSpec& spec, const ParamStore<T>& params) {
  return {spec, params.template cast<double>()};
}

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write(kCheckpointMagic, 4);
  const std::string doc = serialize_spec(ck.spec);
  io::put_array(os, std::vector<char>(doc.begin(), doc.end()));
  io::put<std::uint64_t>(os, ck.params.size());
  for (const auto& p : ck.params) {
    io::put_array(os, std::vector<char>(p.name.begin(), p.name.end()));
    io::put<std::uint32_t>(os, 3);
    const auto& s = p.value.shape();
    for (std::size_t d : {s.batch, s.time, s.channels}) io::put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(p.value.data()),
             static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw Error("not a checkpoint (bad magic)");
  const auto doc = io::get_array<char>(is, "checkpoint spec", 1 << 26);
  Checkpoint ck{parse_spec(std::string_view(doc.data(), doc.size())), {}};
  ck.params = ParamStore<double>(ck.spec);
  const auto n = io::get<std::uint64_t>(is, "parameter count");
  if (n != ck.params.size())
    throw Error("checkpoint holds " + std::to_string(n) + " parameters, spec needs " +
                std::to_string(ck.params.size()));
  for (auto& p : ck.params) {
    const auto name = io::get_array<char>(is, "parameter name", 4096);
    if (std::string(name.begin(), name.end()) != p.name)
      throw Error("parameter order differs from spec", p.name);
    if (io::get<std::uint32_t>(is, "rank") != 3) throw Error("unsupported rank", p.name);
    Shape s;
    s.batch = io::get<std::uint64_t>(is, "dim");
    s.time = io::get<std::uint64_t>(is, "dim");
    s.channels = io::get<std::uint64_t>(is, "dim");
    if (!(s == p.value.shape()))
      throw Error("shape " + to_string(s) + " differs from spec " + to_string(p.value.shape()), p.name);
    if (!is.read(reinterpret_cast<char*>(p.value.data()),
                 static_cast<std::streamsize>(p.value.size() * sizeof(double))))
      throw Error("truncated values", p.name);
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  auto os = io::open_out(path);
  write_checkpoint(os, ck);
  if (!os) throw Error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto is = io::open_in(path);
  return read_checkpoint(is);
}

/// Network in precision T holding the checkpoint's parameters.
template <typename T>
Network<T> restore(const Checkpoint& ck) {
  Network<T> net(ck.spec);
  auto cast = ck.params.template cast<T>();
  for (std::size_t i = 0; i < cast.size(); ++i) net.params()[i].value = cast[i].value;
  return net;
}

}  // namespace lrf
