#pragma once

#include <filesystem>
#include <vector>

#include <torch/types.h>

#include "viewcraft/rng.hpp"

namespace viewcraft {

/// Wearable-sensor spectrogram parameters (no mel scaling).
struct SensorWindowSpec {
  double window_seconds = 10.0;
  int64_t sample_rate = 100;
  int64_t channels = 52;
  int64_t fft_bins = 63;
  int64_t hop = 32;
  double power = 2.0;
  double log_offset = 1e-6;

  int64_t window_samples() const;
  void validate() const;
};

/// Multi-channel recording on a uniform sample grid; NaN marks missing data.
struct SensorRecording {
  torch::Tensor samples;   // T x C float32
  torch::Tensor activity;  // T int64, raw activity ids (0 = transient)
  int64_t subject = 0;
};

/// Linear interpolation over NaN runs, per channel (T x C). Leading and
/// trailing gaps take the nearest valid value; an all-missing channel becomes 0.
torch::Tensor interpolate_missing(const torch::Tensor& samples);

/// Window [start, start + window) -> C x F x T log power spectrograms
/// (52 x 32 x 32 with the defaults): log(|STFT|^power + log_offset).
/// Throws WindowOutOfBounds.
torch::Tensor sensor_window_to_spectrograms(const SensorRecording& recording, int64_t start,
                                            const SensorWindowSpec& spec);

/// Same transform on an already-extracted window (T x C).
torch::Tensor window_to_spectrograms(const torch::Tensor& window, const SensorWindowSpec& spec);

/// Contiguous run of one activity within one subject's recording.
struct ActivitySegment {
  int64_t recording = 0;  // index into the recordings vector
  int64_t begin = 0;
  int64_t end = 0;        // exclusive
  int64_t activity = 0;
};

/// Segments of nonzero activity at least `min_length` samples long.
std::vector<ActivitySegment> activity_segments(const std::vector<SensorRecording>& recordings,
                                               int64_t min_length);

struct SensorWindow {
  int64_t recording = 0;
  int64_t start = 0;
  int64_t activity = 0;
};

/// Draws windows by choosing a subject, then an activity, then a segment of
/// that activity, then a start position. Windows never straddle segments.
std::vector<SensorWindow> sample_sensor_windows(const std::vector<SensorRecording>& recordings,
                                                const SensorWindowSpec& spec, int64_t count,
                                                Rng& rng);

/// The twelve protocol activities, mapped to class ids 0..11; -1 otherwise.
int64_t pamap2_class_id(int64_t activity);
inline constexpr int64_t kPamap2NumClasses = 12;

/// Reads one PAMAP2 protocol file (space separated, 54 columns: timestamp,
/// activity, heart rate, 3 x 17 IMU columns). Channels are columns 2..53.
/// Missing readings (NaN) are linearly interpolated.
SensorRecording read_pamap2_subject(const std::filesystem::path& path, int64_t subject);

}  // namespace viewcraft
