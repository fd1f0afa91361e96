#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <unistd.h>

namespace mtrack::test {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("mtrack_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

FeatureSequence seq1d(const std::vector<float>& values, FeatureKind kind) {
  FeatureSequence s(kind, kDefaultFramePeriodMs, 1);
  for (float v : values) s.append_row(std::span<const float>(&v, 1));
  return s;
}

BruteDtw brute_force_dtw(const FeatureSequence& x, const FeatureSequence& y) {
  BruteDtw out;
  out.cost = std::numeric_limits<double>::infinity();
  const std::size_t P = x.rows(), Q = y.rows();
  std::vector<IndexPair> path;
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t p, std::size_t q, double acc) {
    path.push_back({p, q});
    double a = acc;
    {
      double s = 0.0;
      for (std::size_t d = 0; d < x.dim(); ++d) {
        const double diff = double(x.row(p - 1)[d]) - double(y.row(q - 1)[d]);
        s += diff * diff;
      }
      a += std::sqrt(s);
    }
    if (p == P && q == Q) {
      ++out.paths;
      if (a < out.cost) {
        out.cost = a;
        out.optimal.clear();
      }
      if (a == out.cost) out.optimal.push_back(path);
    } else {
      if (p < P && q < Q) walk(p + 1, q + 1, a);
      if (p < P) walk(p + 1, q, a);
      if (q < Q) walk(p, q + 1, a);
    }
    path.pop_back();
  };
  walk(1, 1, 0.0);
  return out;
}

std::vector<double> naive_semitone_bands(std::span<const float> frame, int sample_rate, std::size_t fft_size) {
  const std::size_t n = frame.size();
  std::vector<double> w(n);
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * double(i) / double(n)));
    wsum += w[i];
  }
  const double bin_hz = double(sample_rate) / double(fft_size);
  std::vector<double> bands(kSemitoneBands, 0.0);
  for (std::size_t b = 0; b < kSemitoneBands; ++b) {
    const double centre = 440.0 * std::pow(2.0, (double(kLowestMidi + int(b)) - 69.0) / 12.0);
    const double lo = centre * std::pow(2.0, -1.0 / 24.0);
    const double hi = centre * std::pow(2.0, 1.0 / 24.0);
    for (std::size_t k = 0; k <= fft_size / 2; ++k) {
      const double f = double(k) * bin_hz;
      if (f < lo || f >= hi) continue;
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double ang = -2.0 * std::numbers::pi * double(k) * double(i) / double(fft_size);
        re += frame[i] * w[i] * std::cos(ang);
        im += frame[i] * w[i] * std::sin(ang);
      }
      bands[b] += std::hypot(re, im);
    }
    bands[b] *= 2.0 / wsum;
  }
  return bands;
}

AudioClip sine_clip(double hz, double duration_ms, double amplitude, int sample_rate) {
  AudioClip c;
  c.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(duration_ms * sample_rate / 1000.0));
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * double(i) / sample_rate));
  }
  return c;
}

namespace {

bool fail(std::string* why, const std::string& msg) {
  if (why) *why = msg;
  return false;
}

bool type_ok(const std::string& t, const nlohmann::json& v) {
  if (t == "object") return v.is_object();
  if (t == "string") return v.is_string();
  if (t == "integer") return v.is_number_integer();
  if (t == "number") return v.is_number();
  if (t == "boolean") return v.is_boolean();
  if (t == "array") return v.is_array();
  if (t == "null") return v.is_null();
  return false;
}

}  // namespace

bool schema_valid(const nlohmann::json& schema, const nlohmann::json& value, std::string* why) {
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = type_ok(t.get<std::string>(), value);
    } else {
      for (const auto& alt : t) ok = ok || type_ok(alt.get<std::string>(), value);
    }
    if (!ok) return fail(why, "type mismatch: " + value.dump());
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == value;
    if (!found) return fail(why, "not in enum: " + value.dump());
  }
  if (value.is_number()) {
    const double v = value.get<double>();
    if (!std::isfinite(v)) return fail(why, "non-finite number");
    if (schema.contains("minimum") && v < schema["minimum"].get<double>()) return fail(why, "below minimum");
    if (schema.contains("maximum") && v > schema["maximum"].get<double>()) return fail(why, "above maximum");
  }
  if (value.is_string() && schema.contains("maxLength") &&
      value.get<std::string>().size() > schema["maxLength"].get<std::size_t>()) {
    return fail(why, "string too long");
  }
  if (value.is_object()) {
    if (schema.contains("required")) {
      for (const auto& k : schema["required"]) {
        if (!value.contains(k.get<std::string>())) return fail(why, "missing " + k.get<std::string>());
      }
    }
    const auto props = schema.value("properties", nlohmann::json::object());
    const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
    for (const auto& [k, v] : value.items()) {
      if (props.contains(k)) {
        if (!schema_valid(props[k], v, why)) return false;
      } else if (closed) {
        return fail(why, "unexpected key " + k);
      }
    }
  }
  return true;
}

nlohmann::json load_packet_schema() {
  std::ifstream in(fs::path(MTRACK_DOCS_DIR) / "position_packet.schema.json");
  return nlohmann::json::parse(in);
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  // nearest rank
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * double(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace mtrack::test
