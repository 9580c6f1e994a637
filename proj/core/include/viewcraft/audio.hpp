#pragma once

#include <filesystem>

#include <torch/types.h>

#include "viewcraft/rng.hpp"

namespace viewcraft {

/// Log-mel spectrogram front end for raw speech waveforms.
struct SpectrogramSpec {
  int64_t max_frames = 150000;
  int64_t hop = 2360;
  /// Analysis window length in samples.
  int64_t fft_window = 64;
  /// FFT size; the window is zero-padded (centered) to this length.
  int64_t n_fft = 400;
  int64_t n_mels = 64;
  int64_t sample_rate = 16000;
  bool mel = true;
  bool power_to_db = true;

  /// 64 x 64 output: hop 2360, window 64.
  static SpectrogramSpec small();
  /// 112 x 112 output: hop 672, window 112.
  static SpectrogramSpec large();

  /// Side of the square output; also the number of time frames kept.
  int64_t output_size() const { return n_mels; }
  void validate() const;
};

enum class TruncateMode { kTrain, kEval };

/// Truncates to max_frames (train: head or tail chosen at random; eval:
/// always drop the tail), zero-pads short inputs, then STFT -> |.|^2 ->
/// mel projection -> dB. Returns 1 x S x S. Throws EmptyInput.
torch::Tensor waveform_to_logmel(const torch::Tensor& waveform, const SpectrogramSpec& spec,
                                 TruncateMode mode, Rng& rng);

/// HTK-scale triangular filterbank, n_freqs x n_mels (no area normalization).
torch::Tensor mel_filterbank(int64_t n_freqs, int64_t n_mels, double sample_rate, double f_min,
                             double f_max);

struct Waveform {
  torch::Tensor samples;  // 1-D float32 in [-1, 1], channels averaged
  int64_t sample_rate = 0;
};

/// RIFF/WAVE reader for 8/16/24/32-bit PCM and 32-bit float. Throws IOFailure.
Waveform read_wav(const std::filesystem::path& path);
/// 16-bit PCM mono writer.
void write_wav(const std::filesystem::path& path, const torch::Tensor& samples, int64_t sample_rate);

}  // namespace viewcraft
