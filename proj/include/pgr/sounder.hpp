#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pgr::sounder {

using cplx = std::complex<double>;

// Maximal-length sequence from a degree-14 Galois LFSR
// (x^14 + x^13 + x^12 + x^2 + 1); period 16383.
struct Codeword {
  int order = 14;
  uint16_t seed = 1;
  std::vector<uint8_t> bits;
  size_t period() const { return bits.size(); }
};

// Full period starting from `seed`; the low 14 bits must be nonzero.
Codeword glfsr14(uint16_t seed = 1);

// BPSK mapping: bit 0 -> +1.0, bit 1 -> -1.0.
std::vector<double> bpsk(const std::vector<uint8_t>& bits);

struct Tap {
  int delay_index = 0;
  cplx amplitude;
};

// Circular matched-filter correlation of rx against one reference
// period: rx is folded over its full periods (a trailing partial period
// is ignored), then circularly correlated and normalized by the
// reference energy, so rx equal to the reference gives cir[0] = 1.
std::vector<cplx> correlate_cir(const std::vector<cplx>& rx,
                                const std::vector<double>& ref);

// Strict local maxima of |cir|^2 whose power exceeds the mean of the
// surrounding +-guard lags (excluding the lag itself) by threshold_db.
// Neighborhoods wrap circularly; taps come back sorted by delay.
std::vector<Tap> detect_peaks(const std::vector<cplx>& cir,
                              double threshold_db = 3.0, int guard = 5);

// 10*log10 of the summed tap powers; empty when no taps.
std::optional<double> received_power_db(const std::vector<Tap>& taps);

struct CalibrationParams {
  double p_tx_dbm = 0.0;      // generator output
  double g_amp_db = 0.0;      // TX amplifier gain
  double g_ant_db = 0.0;      // combined antenna gains
  double l_cable_db = 0.0;    // cable loss in the calibration path
  double l_att_db = 0.0;      // attenuators in the calibration path
  double p_rx_otc_db = 0.0;   // digital receive power of the cabled capture
};

// Conducted power expected at the receiver during the cabled
// calibration capture: p_tx + g_amp - l_cable - l_att.
double conducted_reference(const CalibrationParams& cal);

// Over-the-air path gain from a digital receive power, referenced to
// the cabled capture: p_rx_ota - p_rx_otc - l_cable - l_att - g_ant.
double path_gain_ota(double p_rx_ota_db, const CalibrationParams& cal);

struct CaptureMeta {
  double sample_rate_hz = 0.0;
  double center_freq_hz = 0.0;
  long long start_unix_s = 0;
};

struct GpsFix {
  double t_unix_s = 0.0;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
};

struct TracePoint {
  long long t_unix_s = 0;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double pg_db = 0.0;
};

struct PathGainTrace {
  std::vector<TracePoint> points;
};

struct SounderConfig {
  double chip_rate_hz = 0.0;
  uint16_t codeword_seed = 1;
  double threshold_db = 3.0;
  int guard = 5;
  // Taps below the CIR median power plus this margin are treated as
  // correlation noise; a second with no surviving tap is dropped.
  double noise_gate_db = 15.0;
  CalibrationParams cal;
};

// Raw IQ file: interleaved float32 little-endian pairs, with a JSON
// sidecar at path + ".json" holding sample_rate_hz, center_freq_hz and
// start_unix_s.
std::vector<cplx> load_iq(const std::string& path, CaptureMeta* meta);
void write_iq(const std::string& path, const std::vector<cplx>& samples,
              const CaptureMeta& meta);

// GPS track CSV with header t_unix_s,lat_deg,lon_deg; timestamps must
// ascend.
std::vector<GpsFix> load_gps_csv(const std::string& path);
void write_gps_csv(const std::string& path, const std::vector<GpsFix>& fixes);

// Full chain: per integer-second block, resample to the chip rate,
// correlate, detect taps, gate against the CIR noise floor, calibrate,
// and attach a position interpolated at the block center. Seconds with
// no surviving tap, or without a GPS fix within 0.5 s of the block
// center, are dropped; throws domain_error if nothing survives.
PathGainTrace process_capture(const std::string& iq_path,
                              const std::string& gps_path,
                              const SounderConfig& cfg);

// Centered moving average over pg_db, window truncated at the ends;
// timestamps and positions pass through.
PathGainTrace moving_average(const PathGainTrace& trace, int window = 5);

// Trace CSV with header t_unix_s,lat_deg,lon_deg,pg_db.
void write_trace_csv(const PathGainTrace& trace, const std::string& path);
PathGainTrace load_trace_csv(const std::string& path);

}  // namespace pgr::sounder
