#pragma once

// Reverberation simulation, objective quality measures and log-mel features.
//
// Analysis framing everywhere: 25 ms Hamming frames with a 10 ms shift and a
// power-of-two transform (256 points at 8 kHz).

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lrf/binary_io.hpp"
#include "lrf/tensor.hpp"

namespace lrf {

inline constexpr double kDefaultSampleRate = 8000.0;
inline constexpr double kFrameLengthSec = 0.025;
inline constexpr double kFrameShiftSec = 0.010;
inline constexpr double kPowerFloor = 1e-10;
inline constexpr int kNumMelBins = 40;

struct Waveform {
  std::vector<double> samples;
  double sample_rate = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
  bool operator==(const Waveform&) const = default;
};

struct Rir {
  std::vector<double> taps;
  double sample_rate = kDefaultSampleRate;
  double t60 = 0;
  std::uint64_t seed = 0;
};

/// frames x dims matrix, row-major.
struct FeatureSequence {
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<double> data;
  double frame_shift_ms = 10;
  double frame_length_ms = 25;
  bool cmvn_applied = false;

  double& at(std::size_t f, std::size_t d) { return data[f * dims + d]; }
  double at(std::size_t f, std::size_t d) const { return data[f * dims + d]; }
};

// ---------------------------------------------------------------------------
// FFT plumbing (FFTW). Planning is not thread-safe, so plans are created under
// a global lock; execution uses the new-array interface.

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Real-to-complex transform of fixed size n.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }

  std::size_t size() const { return n_; }
  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  std::complex<double> bin(std::size_t k) const { return {out_[k][0], out_[k][1]}; }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

/// Complex-to-real inverse (unnormalized) of fixed size n.
class RealIfft {
 public:
  explicit RealIfft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_complex(n / 2 + 1);
    out_ = fftw_alloc_real(n);
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  RealIfft(const RealIfft&) = delete;
  RealIfft& operator=(const RealIfft&) = delete;
  ~RealIfft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }

  void set(std::size_t k, std::complex<double> v) {
    in_[k][0] = v.real();
    in_[k][1] = v.imag();
  }
  void execute() { fftw_execute(plan_); }
  double output(std::size_t i) const { return out_[i]; }

 private:
  std::size_t n_;
  fftw_complex* in_ = nullptr;
  double* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

struct FrameGeometry {
  std::size_t length = 200;
  std::size_t shift = 80;
  std::size_t fft_size = 256;

  static FrameGeometry for_rate(double fs) {
    FrameGeometry g;
    g.length = static_cast<std::size_t>(std::lround(kFrameLengthSec * fs));
    g.shift = static_cast<std::size_t>(std::lround(kFrameShiftSec * fs));
    g.fft_size = detail::next_pow2(g.length);
    return g;
  }

  std::size_t num_frames(std::size_t samples) const {
    return samples < length ? 0 : 1 + (samples - length) / shift;
  }
  std::size_t num_bins() const { return fft_size / 2 + 1; }
  /// Samples needed for exactly `frames` frames.
  std::size_t samples_for(std::size_t frames) const {
    return frames == 0 ? 0 : length + (frames - 1) * shift;
  }
};

inline std::vector<double> hamming(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  return w;
}

/// Per-frame power spectra (frames x bins) of Hamming-windowed frames.
inline std::vector<std::vector<double>> power_spectra(std::span<const double> x, double fs) {
  const auto geo = FrameGeometry::for_rate(fs);
  const std::size_t frames = geo.num_frames(x.size());
  const auto win = hamming(geo.length);
  detail::RealFft fft(geo.fft_size);
  std::vector<std::vector<double>> out(frames, std::vector<double>(geo.num_bins()));
  for (std::size_t f = 0; f < frames; ++f) {
    double* in = fft.input();
    std::fill(in, in + geo.fft_size, 0.0);
    for (std::size_t i = 0; i < geo.length; ++i) in[i] = x[f * geo.shift + i] * win[i];
    fft.execute();
    for (std::size_t k = 0; k < geo.num_bins(); ++k) out[f][k] = std::norm(fft.bin(k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reverberation

/// Exponentially decaying Gaussian-noise RIR with a unit direct path at lag 0.
/// The amplitude envelope reaches 1e-3 (-60 dB) at n = fs * t60.
inline Rir synth_rir(double t60, double fs, std::uint64_t seed) {
  if (!(t60 >= 0.05 && t60 <= 2.0))
    throw Error("t60 must lie in [0.05, 2.0] s, got " + std::to_string(t60));
  if (!(fs > 0)) throw Error("sample rate must be positive");
  Rir h;
  h.sample_rate = fs;
  h.t60 = t60;
  h.seed = seed;
  const auto n = static_cast<std::size_t>(std::ceil(1.5 * t60 * fs));
  h.taps.resize(n);
  h.taps[0] = 1.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t k = 1; k < n; ++k)
    h.taps[k] = gauss(rng) * std::pow(10.0, -3.0 * static_cast<double>(k) / (fs * t60));
  return h;
}

/// Causal convolution truncated to the input length (FFT-based).
inline Waveform apply_rir(const Waveform& x, const Rir& h) {
  if (x.sample_rate != h.sample_rate)
    throw Error("sample-rate mismatch: signal " + std::to_string(x.sample_rate) + " Hz, RIR " +
                std::to_string(h.sample_rate) + " Hz");
  Waveform y{std::vector<double>(x.size(), 0.0), x.sample_rate};
  if (x.samples.empty() || h.taps.empty()) return y;
  const std::size_t n = detail::next_pow2(x.size() + h.taps.size() - 1);
  detail::RealFft fx(n), fh(n);
  std::fill(fx.input(), fx.input() + n, 0.0);
  std::fill(fh.input(), fh.input() + n, 0.0);
  std::copy(x.samples.begin(), x.samples.end(), fx.input());
  std::copy(h.taps.begin(), h.taps.end(), fh.input());
  fx.execute();
  fh.execute();
  detail::RealIfft inv(n);
  for (std::size_t k = 0; k <= n / 2; ++k) inv.set(k, fx.bin(k) * fh.bin(k));
  inv.execute();
  for (std::size_t i = 0; i < x.size(); ++i) y.samples[i] = inv.output(i) / static_cast<double>(n);
  return y;
}

// ---------------------------------------------------------------------------
// Quality measures

namespace detail {

inline void check_pair(const Waveform& ref, const Waveform& deg) {
  if (ref.size() != deg.size())
    throw Error("signals differ in length: " + std::to_string(ref.size()) + " vs " +
                std::to_string(deg.size()));
  if (ref.sample_rate != deg.sample_rate) throw Error("signals differ in sample rate");
}

inline void check_framable(const Waveform& x) {
  const auto geo = FrameGeometry::for_rate(x.sample_rate);
  if (geo.num_frames(x.size()) == 0)
    throw Error("signal of " + std::to_string(x.size()) + " samples is shorter than one " +
                std::to_string(geo.length) + "-sample frame");
}

}  // namespace detail

/// Residual-to-signal energy ratio treated as an exact match (240 dB): scaling
/// a signal leaves a roundoff residual around 1e-30.
inline constexpr double kSnrResidualFloor = 1e-24;

/// Scale-compensated SNR in dB; +infinity when the residual vanishes.
inline double snr_db(const Waveform& ref, const Waveform& deg) {
  detail::check_pair(ref, deg);
  double rr = 0, rd = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    rr += ref.samples[i] * ref.samples[i];
    rd += ref.samples[i] * deg.samples[i];
  }
  if (rr == 0) throw Error("reference signal has zero energy");
  const double a = rd / rr;
  double sig = 0, res = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = a * ref.samples[i];
    sig += s * s;
    res += (deg.samples[i] - s) * (deg.samples[i] - s);
  }
  if (res <= kSnrResidualFloor * sig) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / res);
}

/// Spectral Itakura-Saito distance: mean over frames and bins of r - ln r - 1,
/// r = P_ref / P_deg (floored power spectra).
inline double itakura_saito(const Waveform& ref, const Waveform& deg) {
  detail::check_pair(ref, deg);
  detail::check_framable(ref);
  const auto pr = power_spectra(ref.samples, ref.sample_rate);
  const auto pd = power_spectra(deg.samples, deg.sample_rate);
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < pr.size(); ++f)
    for (std::size_t k = 0; k < pr[f].size(); ++k) {
      const double r = std::max(pr[f][k], kPowerFloor) / std::max(pd[f][k], kPowerFloor);
      acc += r - std::log(r) - 1.0;
      ++count;
    }
  return acc / static_cast<double>(count);
}

inline constexpr int kCepstralOrder = 16;

/// Real cepstrum c_0..c_order of a one-sided power spectrum (fft_size/2+1 bins),
/// computed from the natural-log power spectrum of the full symmetric transform.
inline std::vector<double> real_cepstrum(std::span<const double> power, int order) {
  const std::size_t bins = power.size();
  const std::size_t n = 2 * (bins - 1);
  std::vector<double> logp(bins);
  for (std::size_t k = 0; k < bins; ++k) logp[k] = std::log(std::max(power[k], kPowerFloor));
  std::vector<double> c(static_cast<std::size_t>(order) + 1);
  for (int q = 0; q <= order; ++q) {
    double s = logp[0] + logp[bins - 1] * ((q % 2) ? -1.0 : 1.0);
    for (std::size_t k = 1; k + 1 < bins; ++k)
      s += 2.0 * logp[k] *
           std::cos(2.0 * std::numbers::pi * static_cast<double>(q) * static_cast<double>(k) /
                    static_cast<double>(n));
    c[q] = s / static_cast<double>(n);
  }
  return c;
}

/// Cepstral distance in dB over c_1..c_16 (c_0, the gain term, excluded),
/// averaged over frames.
inline double cepstral_distance(const Waveform& ref, const Waveform& deg) {
  detail::check_pair(ref, deg);
  detail::check_framable(ref);
  const auto pr = power_spectra(ref.samples, ref.sample_rate);
  const auto pd = power_spectra(deg.samples, deg.sample_rate);
  const double scale = 10.0 / std::numbers::ln10;
  double acc = 0;
  for (std::size_t f = 0; f < pr.size(); ++f) {
    const auto cr = real_cepstrum(pr[f], kCepstralOrder);
    const auto cd = real_cepstrum(pd[f], kCepstralOrder);
    double ss = 0;
    for (int q = 1; q <= kCepstralOrder; ++q) ss += (cr[q] - cd[q]) * (cr[q] - cd[q]);
    acc += scale * std::sqrt(2.0 * ss);
  }
  return acc / static_cast<double>(pr.size());
}

// ---------------------------------------------------------------------------
// Log-mel filterbank features

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters, linear on the mel axis, spanning 0..fs/2. Returns
/// num_filters rows of num_bins weights.
inline std::vector<std::vector<double>> mel_filterbank(int num_filters, std::size_t fft_size,
                                                       double fs) {
  const std::size_t bins = fft_size / 2 + 1;
  const double top = hz_to_mel(fs / 2.0);
  std::vector<double> edge(static_cast<std::size_t>(num_filters) + 2);
  for (std::size_t i = 0; i < edge.size(); ++i)
    edge[i] = top * static_cast<double>(i) / static_cast<double>(num_filters + 1);
  std::vector<std::vector<double>> fb(static_cast<std::size_t>(num_filters), std::vector<double>(bins));
  for (std::size_t k = 0; k < bins; ++k) {
    const double m = hz_to_mel(static_cast<double>(k) * fs / static_cast<double>(fft_size));
    for (int j = 0; j < num_filters; ++j) {
      const double l = edge[j], c = edge[j + 1], r = edge[j + 2];
      double w = 0;
      if (m > l && m <= c) w = (m - l) / (c - l);
      else if (m > c && m < r) w = (r - m) / (r - c);
      fb[j][k] = w;
    }
  }
  return fb;
}

inline constexpr double kPreEmphasis = 0.97;

/// 40-dim log-mel energies with pre-emphasis; CMVN not applied.
inline FeatureSequence melfb(const Waveform& x) {
  detail::check_framable(x);
  const auto geo = FrameGeometry::for_rate(x.sample_rate);
  std::vector<double> emph(x.size());
  emph[0] = x.samples[0];
  for (std::size_t i = 1; i < x.size(); ++i) emph[i] = x.samples[i] - kPreEmphasis * x.samples[i - 1];
  const auto spectra = power_spectra(emph, x.sample_rate);
  const auto fb = mel_filterbank(kNumMelBins, geo.fft_size, x.sample_rate);
  FeatureSequence out;
  out.frames = spectra.size();
  out.dims = kNumMelBins;
  out.data.resize(out.frames * out.dims);
  for (std::size_t f = 0; f < out.frames; ++f)
    for (std::size_t j = 0; j < out.dims; ++j) {
      double e = 0;
      for (std::size_t k = 0; k < spectra[f].size(); ++k) e += fb[j][k] * spectra[f][k];
      out.at(f, j) = std::log(std::max(e, kPowerFloor));
    }
  return out;
}

/// Per-utterance mean and variance normalization (population variance,
/// std floor 1e-8).
inline FeatureSequence cmvn(FeatureSequence f) {
  if (f.frames == 0) return f;
  for (std::size_t d = 0; d < f.dims; ++d) {
    double mean = 0;
    for (std::size_t t = 0; t < f.frames; ++t) mean += f.at(t, d);
    mean /= static_cast<double>(f.frames);
    double var = 0;
    for (std::size_t t = 0; t < f.frames; ++t) var += (f.at(t, d) - mean) * (f.at(t, d) - mean);
    var /= static_cast<double>(f.frames);
    const double sd = std::max(std::sqrt(var), 1e-8);
    for (std::size_t t = 0; t < f.frames; ++t) f.at(t, d) = (f.at(t, d) - mean) / sd;
  }
  f.cmvn_applied = true;
  return f;
}

// ---------------------------------------------------------------------------
// Waveform files: 16-bit PCM mono RIFF/WAVE, or raw float64 with a uint64
// sample-count header (sample rate assumed 8 kHz).

inline void write_wav(const std::string& path, const Waveform& w) {
  auto os = io::open_out(path);
  const auto n = static_cast<std::uint32_t>(w.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  os.write("RIFF", 4);
  io::put<std::uint32_t>(os, 36 + n * 2);
  os.write("WAVEfmt ", 8);
  io::put<std::uint32_t>(os, 16);
  io::put<std::uint16_t>(os, 1);  // PCM
  io::put<std::uint16_t>(os, 1);  // mono
  io::put<std::uint32_t>(os, rate);
  io::put<std::uint32_t>(os, rate * 2);
  io::put<std::uint16_t>(os, 2);
  io::put<std::uint16_t>(os, 16);
  os.write("data", 4);
  io::put<std::uint32_t>(os, n * 2);
  for (double s : w.samples) {
    const auto q = std::clamp<long>(std::lround(s * 32768.0), -32768, 32767);
    io::put<std::int16_t>(os, static_cast<std::int16_t>(q));
  }
  if (!os) throw Error("write failed: " + path);
}

inline Waveform read_wav(std::istream& is) {
  char tag[4];
  auto expect = [&](const char* want) {
    if (!is.read(tag, 4) || std::string(tag, 4) != want)
      throw Error(std::string("not a RIFF/WAVE file (expected '") + want + "')");
  };
  expect("RIFF");
  (void)io::get<std::uint32_t>(is, "RIFF size");
  expect("WAVE");
  Waveform w;
  bool have_fmt = false;
  while (is.read(tag, 4)) {
    const std::string id(tag, 4);
    const auto size = io::get<std::uint32_t>(is, "chunk size");
    if (id == "fmt ") {
      const auto fmt = io::get<std::uint16_t>(is, "format");
      const auto ch = io::get<std::uint16_t>(is, "channels");
      w.sample_rate = io::get<std::uint32_t>(is, "sample rate");
      (void)io::get<std::uint32_t>(is, "byte rate");
      (void)io::get<std::uint16_t>(is, "block align");
      const auto bits = io::get<std::uint16_t>(is, "bits");
      if (fmt != 1 || ch != 1 || bits != 16) throw Error("only mono 16-bit PCM WAV is supported");
      is.ignore(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error("WAV data chunk precedes fmt chunk");
      w.samples.resize(size / 2);
      for (auto& s : w.samples) s = io::get<std::int16_t>(is, "PCM samples") / 32768.0;
      return w;
    } else {
      is.ignore(size + (size & 1));
    }
  }
  throw Error("WAV file has no data chunk");
}

inline void write_raw(const std::string& path, const Waveform& w) {
  auto os = io::open_out(path);
  io::put_array(os, w.samples);
  if (!os) throw Error("write failed: " + path);
}

/// Reads WAV or raw float64, detected by the RIFF magic.
inline Waveform read_waveform(const std::string& path) {
  auto is = io::open_in(path);
  char magic[4] = {};
  is.read(magic, 4);
  is.clear();
  is.seekg(0);
  if (std::string(magic, 4) == "RIFF") return read_wav(is);
  Waveform w;
  w.samples = io::get_array<double>(is, "raw waveform");
  return w;
}

}  // namespace lrf
