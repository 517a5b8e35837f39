#include "pgr/sounder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pgr/dsp.hpp"
#include "pgr/errors.hpp"

namespace pgr::sounder {

Codeword glfsr14(uint16_t seed) {
  uint16_t state = seed & 0x3FFF;
  if (state == 0) throw input_error("glfsr14: seed must be nonzero mod 2^14");
  Codeword cw;
  cw.seed = seed;
  cw.bits.resize(16383);
  // Galois form, right shift; 0x3802 encodes the feedback of
  // x^14 + x^13 + x^12 + x^2 + 1.
  for (size_t n = 0; n < cw.bits.size(); ++n) {
    uint16_t bit = state & 1;
    cw.bits[n] = static_cast<uint8_t>(bit);
    state >>= 1;
    if (bit) state ^= 0x3802;
  }
  return cw;
}

std::vector<double> bpsk(const std::vector<uint8_t>& bits) {
  std::vector<double> s(bits.size());
  for (size_t i = 0; i < bits.size(); ++i) s[i] = bits[i] ? -1.0 : 1.0;
  return s;
}

std::vector<cplx> correlate_cir(const std::vector<cplx>& rx,
                                const std::vector<double>& ref) {
  size_t n = ref.size();
  if (n < 2) throw input_error("correlate_cir: reference too short");
  size_t periods = rx.size() / n;
  if (periods == 0)
    throw input_error("correlate_cir: rx shorter than one reference period");

  std::vector<cplx> folded(n, cplx(0.0, 0.0));
  for (size_t k = 0; k < periods; ++k) {
    const cplx* block = rx.data() + k * n;
    for (size_t i = 0; i < n; ++i) folded[i] += block[i];
  }
  double inv_k = 1.0 / static_cast<double>(periods);
  for (cplx& v : folded) v *= inv_k;

  // Circular correlation as linear correlation against the doubled
  // block, via an FFT of at least 2n points.
  size_t m = dsp::next_pow2(2 * n);
  std::vector<cplx> a(m, cplx(0.0, 0.0));
  std::vector<cplx> b(m, cplx(0.0, 0.0));
  for (size_t i = 0; i < n; ++i) {
    a[i] = folded[i];
    a[i + n] = folded[i];
    b[i] = cplx(ref[i], 0.0);
  }
  dsp::fft(a, false);
  dsp::fft(b, false);
  for (size_t i = 0; i < m; ++i) a[i] *= std::conj(b[i]);
  dsp::fft(a, true);

  double energy = 0.0;
  for (double v : ref) energy += v * v;
  std::vector<cplx> cir(n);
  for (size_t i = 0; i < n; ++i) cir[i] = a[i] / energy;
  return cir;
}

std::vector<Tap> detect_peaks(const std::vector<cplx>& cir,
                              double threshold_db, int guard) {
  int n = static_cast<int>(cir.size());
  if (guard < 1) throw input_error("detect_peaks: guard must be >= 1");
  if (n < 2 * guard + 1)
    throw input_error("detect_peaks: cir shorter than the guard window");
  std::vector<double> p(n);
  for (int i = 0; i < n; ++i) p[i] = std::norm(cir[i]);
  double factor = std::pow(10.0, threshold_db / 10.0);
  std::vector<Tap> taps;
  for (int i = 0; i < n; ++i) {
    double prev = p[(i + n - 1) % n];
    double next = p[(i + 1) % n];
    if (!(p[i] > prev && p[i] > next)) continue;
    double acc = 0.0;
    for (int d = 1; d <= guard; ++d) {
      acc += p[(i + d) % n];
      acc += p[(i + n - d) % n];
    }
    double mean = acc / (2.0 * guard);
    if (p[i] > mean * factor) taps.push_back({i, cir[i]});
  }
  return taps;
}

std::optional<double> received_power_db(const std::vector<Tap>& taps) {
  if (taps.empty()) return std::nullopt;
  double sum = 0.0;
  for (const Tap& t : taps) sum += std::norm(t.amplitude);
  if (sum <= 0.0) return std::nullopt;
  return 10.0 * std::log10(sum);
}

double conducted_reference(const CalibrationParams& cal) {
  return cal.p_tx_dbm + cal.g_amp_db - cal.l_cable_db - cal.l_att_db;
}

double path_gain_ota(double p_rx_ota_db, const CalibrationParams& cal) {
  return p_rx_ota_db - cal.p_rx_otc_db - cal.l_cable_db - cal.l_att_db -
         cal.g_ant_db;
}

std::vector<cplx> load_iq(const std::string& path, CaptureMeta* meta) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open IQ file: " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(f)),
                        std::istreambuf_iterator<char>());
  if (buf.size() % 8 != 0)
    throw input_error("IQ file is not a whole number of float32 pairs: " +
                      path);
  size_t n = buf.size() / 8;
  std::vector<cplx> samples(n);
  const float* p = reinterpret_cast<const float*>(buf.data());
  for (size_t i = 0; i < n; ++i)
    samples[i] = cplx(static_cast<double>(p[2 * i]),
                      static_cast<double>(p[2 * i + 1]));

  std::string side = path + ".json";
  std::ifstream sf(side);
  if (!sf) throw input_error("missing IQ sidecar: " + side);
  nlohmann::json j;
  try {
    sf >> j;
  } catch (const std::exception& e) {
    throw input_error("bad IQ sidecar " + side + ": " + e.what());
  }
  if (!j.contains("sample_rate_hz") || !j.contains("center_freq_hz") ||
      !j.contains("start_unix_s"))
    throw input_error("IQ sidecar missing required keys: " + side);
  if (meta) {
    meta->sample_rate_hz = j["sample_rate_hz"].get<double>();
    meta->center_freq_hz = j["center_freq_hz"].get<double>();
    meta->start_unix_s = j["start_unix_s"].get<long long>();
  }
  return samples;
}

void write_iq(const std::string& path, const std::vector<cplx>& samples,
              const CaptureMeta& meta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot write IQ file: " + path);
  std::vector<float> buf(samples.size() * 2);
  for (size_t i = 0; i < samples.size(); ++i) {
    buf[2 * i] = static_cast<float>(samples[i].real());
    buf[2 * i + 1] = static_cast<float>(samples[i].imag());
  }
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw input_error("IQ write failed: " + path);

  nlohmann::json j;
  j["sample_rate_hz"] = meta.sample_rate_hz;
  j["center_freq_hz"] = meta.center_freq_hz;
  j["start_unix_s"] = meta.start_unix_s;
  std::ofstream sf(path + ".json");
  if (!sf) throw input_error("cannot write IQ sidecar: " + path + ".json");
  sf << j.dump(2) << "\n";
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    size_t a = cell.find_first_not_of(" \t\r");
    size_t b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  return out;
}

double csv_double(const std::string& path, long line_no,
                  const std::string& tok) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw parse_error(path, line_no, "not a number: '" + tok + "'");
  }
}

}  // namespace

std::vector<GpsFix> load_gps_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw input_error("cannot open GPS track: " + path);
  std::string line;
  long line_no = 0;
  if (!std::getline(f, line)) throw parse_error(path, 1, "empty file");
  ++line_no;
  auto hdr = split_csv_line(line);
  if (hdr != std::vector<std::string>{"t_unix_s", "lat_deg", "lon_deg"})
    throw parse_error(path, 1, "expected header t_unix_s,lat_deg,lon_deg");
  std::vector<GpsFix> fixes;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 3) throw parse_error(path, line_no, "expected 3 columns");
    GpsFix fix;
    fix.t_unix_s = csv_double(path, line_no, cells[0]);
    fix.lat_deg = csv_double(path, line_no, cells[1]);
    fix.lon_deg = csv_double(path, line_no, cells[2]);
    if (!fixes.empty() && fix.t_unix_s <= fixes.back().t_unix_s)
      throw parse_error(path, line_no, "timestamps must ascend");
    fixes.push_back(fix);
  }
  return fixes;
}

void write_gps_csv(const std::string& path, const std::vector<GpsFix>& fixes) {
  std::ofstream f(path);
  if (!f) throw input_error("cannot write GPS track: " + path);
  f << "t_unix_s,lat_deg,lon_deg\n";
  char buf[128];
  for (const GpsFix& fix : fixes) {
    std::snprintf(buf, sizeof buf, "%.3f,%.8f,%.8f\n", fix.t_unix_s,
                  fix.lat_deg, fix.lon_deg);
    f << buf;
  }
  if (!f) throw input_error("GPS write failed: " + path);
}

PathGainTrace process_capture(const std::string& iq_path,
                              const std::string& gps_path,
                              const SounderConfig& cfg) {
  CaptureMeta meta;
  std::vector<cplx> samples = load_iq(iq_path, &meta);
  std::vector<GpsFix> fixes = load_gps_csv(gps_path);
  if (fixes.size() < 2)
    throw input_error("GPS track needs at least two fixes");

  long long sr = std::llround(meta.sample_rate_hz);
  long long cr = std::llround(cfg.chip_rate_hz);
  if (sr <= 0 || std::abs(meta.sample_rate_hz - sr) > 1e-6)
    throw input_error("sample_rate_hz must be a positive integer");
  if (cr <= 0 || std::abs(cfg.chip_rate_hz - cr) > 1e-6)
    throw input_error("chip_rate_hz must be a positive integer");

  Codeword cw = glfsr14(cfg.codeword_seed);
  std::vector<double> ref = bpsk(cw.bits);
  if (cr < static_cast<long long>(ref.size()))
    throw input_error("chip_rate_hz below one codeword period per second");

  long long g = std::gcd(sr, cr);
  int up = static_cast<int>(cr / g);
  int down = static_cast<int>(sr / g);

  PathGainTrace trace;
  size_t n_blocks = samples.size() / static_cast<size_t>(sr);
  for (size_t b = 0; b < n_blocks; ++b) {
    std::vector<cplx> block(samples.begin() + b * sr,
                            samples.begin() + (b + 1) * sr);
    std::vector<cplx> chips = dsp::resample(block, up, down);
    std::vector<cplx> cir = correlate_cir(chips, ref);
    std::vector<Tap> taps = detect_peaks(cir, cfg.threshold_db, cfg.guard);

    // Significance gate: a real tap must clear the CIR median power by
    // a wide margin; spurious local maxima of pure noise do not.
    std::vector<double> powers(cir.size());
    for (size_t i = 0; i < cir.size(); ++i) powers[i] = std::norm(cir[i]);
    std::nth_element(powers.begin(), powers.begin() + powers.size() / 2,
                     powers.end());
    double gate =
        powers[powers.size() / 2] * std::pow(10.0, cfg.noise_gate_db / 10.0);
    std::erase_if(taps,
                  [&](const Tap& t) { return std::norm(t.amplitude) < gate; });

    std::optional<double> p_rx = received_power_db(taps);
    if (!p_rx) continue;

    long long t = meta.start_unix_s + static_cast<long long>(b);
    double tc = static_cast<double>(t) + 0.5;
    if (tc < fixes.front().t_unix_s || tc > fixes.back().t_unix_s) continue;
    size_t hi = 1;
    while (hi + 1 < fixes.size() && fixes[hi].t_unix_s < tc) ++hi;
    const GpsFix& f0 = fixes[hi - 1];
    const GpsFix& f1 = fixes[hi];
    // A block is located only if some fix lies within 0.5 s of its center.
    if (std::min(tc - f0.t_unix_s, f1.t_unix_s - tc) > 0.5) continue;
    double w = (tc - f0.t_unix_s) / (f1.t_unix_s - f0.t_unix_s);

    TracePoint pt;
    pt.t_unix_s = t;
    pt.lat_deg = f0.lat_deg + w * (f1.lat_deg - f0.lat_deg);
    pt.lon_deg = f0.lon_deg + w * (f1.lon_deg - f0.lon_deg);
    pt.pg_db = path_gain_ota(*p_rx, cfg.cal);
    trace.points.push_back(pt);
  }
  if (trace.points.empty())
    throw domain_error("capture yielded no usable seconds");
  return trace;
}

PathGainTrace moving_average(const PathGainTrace& trace, int window) {
  if (window < 1) throw input_error("moving_average: window must be >= 1");
  PathGainTrace out = trace;
  int n = static_cast<int>(trace.points.size());
  int half = window / 2;
  for (int i = 0; i < n; ++i) {
    int lo = std::max(0, i - half);
    int hi = std::min(n - 1, i + half);
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) acc += trace.points[j].pg_db;
    out.points[i].pg_db = acc / (hi - lo + 1);
  }
  return out;
}

void write_trace_csv(const PathGainTrace& trace, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw input_error("cannot write trace: " + path);
  f << "t_unix_s,lat_deg,lon_deg,pg_db\n";
  char buf[160];
  for (const TracePoint& p : trace.points) {
    std::snprintf(buf, sizeof buf, "%lld,%.8f,%.8f,%.4f\n", p.t_unix_s,
                  p.lat_deg, p.lon_deg, p.pg_db);
    f << buf;
  }
  if (!f) throw input_error("trace write failed: " + path);
}

PathGainTrace load_trace_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw input_error("cannot open trace: " + path);
  std::string line;
  long line_no = 0;
  if (!std::getline(f, line)) throw parse_error(path, 1, "empty file");
  ++line_no;
  auto hdr = split_csv_line(line);
  if (hdr !=
      std::vector<std::string>{"t_unix_s", "lat_deg", "lon_deg", "pg_db"})
    throw parse_error(path, 1,
                      "expected header t_unix_s,lat_deg,lon_deg,pg_db");
  PathGainTrace trace;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 4) throw parse_error(path, line_no, "expected 4 columns");
    TracePoint p;
    p.t_unix_s = static_cast<long long>(csv_double(path, line_no, cells[0]));
    p.lat_deg = csv_double(path, line_no, cells[1]);
    p.lon_deg = csv_double(path, line_no, cells[2]);
    p.pg_db = csv_double(path, line_no, cells[3]);
    trace.points.push_back(p);
  }
  return trace;
}

}  // namespace pgr::sounder
