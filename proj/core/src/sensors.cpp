#include "viewcraft/sensors.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <torch/torch.h>

#include "viewcraft/errors.hpp"

namespace viewcraft {

int64_t SensorWindowSpec::window_samples() const {
  return static_cast<int64_t>(std::llround(window_seconds * static_cast<double>(sample_rate)));
}

void SensorWindowSpec::validate() const {
  if (window_seconds <= 0 || sample_rate < 1 || channels < 1 || fft_bins < 2 || hop < 1 ||
      power <= 0 || log_offset <= 0) {
    throw ConfigInvalid("sensor window parameters must be positive");
  }
}

torch::Tensor interpolate_missing(const torch::Tensor& samples) {
  if (samples.dim() != 2) {
    throw ShapeMismatch("interpolate_missing expects a T x C matrix");
  }
  auto out = samples.to(torch::kFloat32).contiguous().clone();
  const int64_t t = out.size(0), c = out.size(1);
  auto a = out.accessor<float, 2>();
  for (int64_t ch = 0; ch < c; ++ch) {
    int64_t prev = -1;
    for (int64_t i = 0; i <= t; ++i) {
      const bool valid = i < t && !std::isnan(a[i][ch]);
      if (i < t && !valid) continue;
      // Fill the gap (prev, i).
      for (int64_t j = prev + 1; j < i; ++j) {
        if (prev < 0 && i >= t) {
          a[j][ch] = 0.0f;
        } else if (prev < 0) {
          a[j][ch] = a[i][ch];
        } else if (i >= t) {
          a[j][ch] = a[prev][ch];
        } else {
          const double frac = static_cast<double>(j - prev) / static_cast<double>(i - prev);
          a[j][ch] = static_cast<float>(a[prev][ch] + frac * (a[i][ch] - a[prev][ch]));
        }
      }
      prev = i;
    }
  }
  return out;
}

torch::Tensor window_to_spectrograms(const torch::Tensor& window, const SensorWindowSpec& spec) {
  spec.validate();
  if (window.dim() != 2 || window.size(1) != spec.channels) {
    throw ShapeMismatch("sensor window must be T x " + std::to_string(spec.channels));
  }
  auto x = window.to(torch::kFloat32);
  if (torch::isnan(x).any().item<bool>()) {
    x = interpolate_missing(x);
  }
  auto signal = x.t().contiguous();  // C x T
  auto hann = torch::hann_window(spec.fft_bins, torch::kFloat32);
  auto stft = torch::stft(signal, spec.fft_bins, spec.hop, spec.fft_bins, hann, /*center=*/true,
                          "reflect", /*normalized=*/false, /*onesided=*/true,
                          /*return_complex=*/true);
  auto mag = torch::abs(stft);
  auto power = spec.power == 2.0 ? mag.square() : mag.pow(spec.power);
  return torch::log(power + spec.log_offset).contiguous();
}

torch::Tensor sensor_window_to_spectrograms(const SensorRecording& recording, int64_t start,
                                            const SensorWindowSpec& spec) {
  const int64_t len = spec.window_samples();
  if (start < 0 || start + len > recording.samples.size(0)) {
    throw WindowOutOfBounds("window [" + std::to_string(start) + ", " + std::to_string(start + len) +
                            ") exceeds recording of " +
                            std::to_string(recording.samples.size(0)) + " samples");
  }
  return window_to_spectrograms(recording.samples.narrow(0, start, len), spec);
}

std::vector<ActivitySegment> activity_segments(const std::vector<SensorRecording>& recordings,
                                               int64_t min_length) {
  std::vector<ActivitySegment> segments;
  for (size_t r = 0; r < recordings.size(); ++r) {
    auto act = recordings[r].activity.to(torch::kInt64).contiguous();
    const auto* a = act.data_ptr<int64_t>();
    const int64_t n = act.numel();
    int64_t begin = 0;
    for (int64_t i = 1; i <= n; ++i) {
      if (i == n || a[i] != a[begin]) {
        if (a[begin] != 0 && i - begin >= min_length) {
          segments.push_back({static_cast<int64_t>(r), begin, i, a[begin]});
        }
        begin = i;
      }
    }
  }
  return segments;
}

std::vector<SensorWindow> sample_sensor_windows(const std::vector<SensorRecording>& recordings,
                                                const SensorWindowSpec& spec, int64_t count,
                                                Rng& rng) {
  const int64_t len = spec.window_samples();
  auto segments = activity_segments(recordings, len);
  // recording -> activity -> segment ids
  std::map<int64_t, std::map<int64_t, std::vector<size_t>>> index;
  for (size_t s = 0; s < segments.size(); ++s) {
    index[segments[s].recording][segments[s].activity].push_back(s);
  }
  if (index.empty()) {
    throw DatasetTooSmall("no activity segment is long enough for a " + std::to_string(len) +
                          "-sample window");
  }
  std::vector<int64_t> recs;
  for (const auto& [r, _] : index) recs.push_back(r);

  std::vector<SensorWindow> windows;
  windows.reserve(count);
  for (int64_t k = 0; k < count; ++k) {
    const auto& by_activity = index[recs[rng.randint(0, static_cast<int64_t>(recs.size()) - 1)]];
    auto it = by_activity.begin();
    std::advance(it, rng.randint(0, static_cast<int64_t>(by_activity.size()) - 1));
    const auto& ids = it->second;
    const auto& seg = segments[ids[rng.randint(0, static_cast<int64_t>(ids.size()) - 1)]];
    windows.push_back({seg.recording, rng.randint(seg.begin, seg.end - len), seg.activity});
  }
  return windows;
}

int64_t pamap2_class_id(int64_t activity) {
  static const std::map<int64_t, int64_t> kIds{{1, 0},  {2, 1},  {3, 2},  {4, 3},
                                               {5, 4},  {6, 5},  {7, 6},  {12, 7},
                                               {13, 8}, {16, 9}, {17, 10}, {24, 11}};
  auto it = kIds.find(activity);
  return it == kIds.end() ? -1 : it->second;
}

SensorRecording read_pamap2_subject(const std::filesystem::path& path, int64_t subject) {
  std::ifstream in(path);
  if (!in) {
    throw IOFailure("cannot open PAMAP2 file " + path.string());
  }
  constexpr int kColumns = 54;
  constexpr int kChannels = 52;
  std::vector<float> values;
  std::vector<int64_t> activity;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const char* p = line.c_str();
    char* end = nullptr;
    double row[kColumns];
    int col = 0;
    for (; col < kColumns; ++col) {
      row[col] = std::strtod(p, &end);
      if (end == p) break;
      p = end;
    }
    if (col != kColumns) {
      throw IOFailure(path.string() + ":" + std::to_string(line_no) + ": expected 54 columns");
    }
    activity.push_back(static_cast<int64_t>(row[1]));
    for (int c = 0; c < kChannels; ++c) {
      values.push_back(static_cast<float>(row[2 + c]));
    }
  }
  const auto t = static_cast<int64_t>(activity.size());
  SensorRecording rec;
  rec.subject = subject;
  rec.samples = interpolate_missing(
      torch::from_blob(values.data(), {t, kChannels}, torch::kFloat32).clone());
  rec.activity = torch::from_blob(activity.data(), {t}, torch::kInt64).clone();
  return rec;
}

}  // namespace viewcraft
