#pragma once

#include "mdpose/core/container.hpp"
#include "mdpose/wavesim/signal.hpp"

namespace mdpose::wavesim {

inline Container to_container(const BasebandSignal& s) {
  Container c;
  c.header = {{"version", kContainerVersion},  {"kind", "signal"},
              {"dtype", "c64le"},              {"samples", s.samples.size()},
              {"sample_rate_hz", s.sample_rate_hz}, {"start_time_s", s.start_time_s},
              {"layout", "N×(re,im)"}};
  std::vector<float> flat;
  flat.reserve(2 * s.samples.size());
  for (const auto& v : s.samples) {
    flat.push_back(static_cast<float>(v.real()));
    flat.push_back(static_cast<float>(v.imag()));
  }
  c.payload = encode_f32le(flat);
  return c;
}

inline BasebandSignal signal_from_container(const Container& c) {
  expect_kind(c, "signal", "c64le");
  BasebandSignal s;
  try {
    s.sample_rate_hz = c.header.at("sample_rate_hz").get<double>();
    s.start_time_s = c.header.at("start_time_s").get<double>();
    const auto n = c.header.at("samples").get<std::size_t>();
    const auto flat = decode_f32le(c.payload);
    if (flat.size() != 2 * n) throw IoError("signal payload does not match 'samples'");
    s.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.samples[i] = {flat[2 * i], flat[2 * i + 1]};
  } catch (const Json::exception& e) {
    throw IoError(std::string("bad signal header: ") + e.what());
  }
  if (!(s.sample_rate_hz > 0.0)) throw IoError("signal header: sample_rate_hz must be positive");
  return s;
}

inline void save_signal(const std::string& path, const BasebandSignal& s) { save_container(path, to_container(s)); }

inline BasebandSignal load_signal(const std::string& path) { return signal_from_container(load_container(path)); }

}  // namespace mdpose::wavesim
