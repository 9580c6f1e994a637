#include "viewcraft/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include <torch/torch.h>

#include "viewcraft/errors.hpp"

namespace viewcraft {

SpectrogramSpec SpectrogramSpec::small() { return {}; }

SpectrogramSpec SpectrogramSpec::large() {
  SpectrogramSpec s;
  s.hop = 672;
  s.fft_window = 112;
  s.n_mels = 112;
  return s;
}

void SpectrogramSpec::validate() const {
  if (max_frames < 1 || hop < 1 || fft_window < 1 || n_mels < 1 || sample_rate < 1) {
    throw ConfigInvalid("spectrogram parameters must be positive");
  }
  if (n_fft < fft_window) {
    throw ConfigInvalid("spectrogram n_fft must be >= fft_window");
  }
}

torch::Tensor mel_filterbank(int64_t n_freqs, int64_t n_mels, double sample_rate, double f_min,
                             double f_max) {
  auto hz_to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto freqs = torch::linspace(0.0, sample_rate / 2.0, n_freqs, torch::kFloat64);
  auto mel_pts = torch::linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2, torch::kFloat64);
  auto hz_pts = 700.0 * (torch::pow(10.0, mel_pts / 2595.0) - 1.0);
  auto diff = hz_pts.slice(0, 1) - hz_pts.slice(0, 0, -1);             // n_mels + 1
  auto slopes = hz_pts.unsqueeze(0) - freqs.unsqueeze(1);              // n_freqs x n_mels + 2
  auto down = -slopes.slice(1, 0, -2) / diff.slice(0, 0, -1);
  auto up = slopes.slice(1, 2) / diff.slice(0, 1);
  return torch::clamp_min(torch::min(down, up), 0.0).to(torch::kFloat32);
}

torch::Tensor waveform_to_logmel(const torch::Tensor& waveform, const SpectrogramSpec& spec,
                                 TruncateMode mode, Rng& rng) {
  spec.validate();
  if (waveform.dim() != 1 || waveform.size(0) == 0) {
    throw EmptyInput("log-mel front end needs a nonempty 1-D waveform");
  }
  auto w = waveform.to(torch::kFloat32);
  const int64_t n = w.size(0);
  if (n > spec.max_frames) {
    const bool drop_head = mode == TruncateMode::kTrain && rng.bernoulli(0.5);
    w = drop_head ? w.narrow(0, n - spec.max_frames, spec.max_frames)
                  : w.narrow(0, 0, spec.max_frames);
  } else if (n < spec.max_frames) {
    w = torch::cat({w, torch::zeros({spec.max_frames - n})});
  }

  auto window = torch::hann_window(spec.fft_window, torch::kFloat32);
  auto stft = torch::stft(w, spec.n_fft, spec.hop, spec.fft_window, window, /*center=*/true,
                          "reflect", /*normalized=*/false, /*onesided=*/true,
                          /*return_complex=*/true);
  auto power = torch::abs(stft).square();  // n_freqs x frames

  if (spec.mel) {
    auto fb = mel_filterbank(power.size(0), spec.n_mels, static_cast<double>(spec.sample_rate), 0.0,
                             spec.sample_rate / 2.0);
    power = torch::matmul(fb.t(), power);
  } else if (power.size(0) != spec.n_mels) {
    throw ConfigInvalid("linear spectrogram bin count differs from n_mels; enable mel");
  }
  if (spec.power_to_db) {
    power = 10.0 * torch::log10(power.clamp_min(1e-10));
  }

  const int64_t side = spec.output_size();
  const int64_t frames = power.size(1);
  if (frames >= side) {
    power = power.narrow(1, 0, side);
  } else {
    const double floor_value = spec.power_to_db ? -100.0 : 0.0;
    power = torch::cat({power, torch::full({power.size(0), side - frames}, floor_value)}, 1);
  }
  return power.unsqueeze(0).contiguous();
}

namespace {

template <typename T>
T read_le(const std::vector<char>& buf, size_t offset) {
  T value{};
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IOFailure("cannot open wav file " + path.string());
  }
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw IOFailure("not a RIFF/WAVE file: " + path.string());
  }
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_offset = 0, data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto size = read_le<uint32_t>(buf, pos + 4);
    const size_t body = pos + 8;
    if (id == "fmt " && body + 16 <= buf.size()) {
      format = read_le<uint16_t>(buf, body);
      channels = read_le<uint16_t>(buf, body + 2);
      rate = read_le<uint32_t>(buf, body + 4);
      bits = read_le<uint16_t>(buf, body + 14);
      if (format == 0xFFFE && size >= 26) {
        format = read_le<uint16_t>(buf, body + 24);  // WAVE_FORMAT_EXTENSIBLE subformat
      }
    } else if (id == "data") {
      data_offset = body;
      data_size = std::min<size_t>(size, buf.size() - body);
      break;
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0 || data_offset == 0 || bits == 0) {
    throw IOFailure("malformed wav header: " + path.string());
  }
  const size_t bytes = bits / 8;
  const size_t frames = data_size / (bytes * channels);
  std::vector<float> out(frames, 0.0f);
  for (size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      const size_t at = data_offset + (f * channels + c) * bytes;
      double v = 0.0;
      if (format == 3 && bits == 32) {
        v = read_le<float>(buf, at);
      } else if (format == 1 && bits == 16) {
        v = read_le<int16_t>(buf, at) / 32768.0;
      } else if (format == 1 && bits == 8) {
        v = (static_cast<uint8_t>(buf[at]) - 128) / 128.0;
      } else if (format == 1 && bits == 24) {
        int32_t s = (static_cast<uint8_t>(buf[at]) | (static_cast<uint8_t>(buf[at + 1]) << 8) |
                     (static_cast<int8_t>(buf[at + 2]) * 65536));
        v = s / 8388608.0;
      } else if (format == 1 && bits == 32) {
        v = read_le<int32_t>(buf, at) / 2147483648.0;
      } else {
        throw IOFailure("unsupported wav encoding in " + path.string());
      }
      acc += v;
    }
    out[f] = static_cast<float>(acc / channels);
  }
  return {torch::from_blob(out.data(), {static_cast<int64_t>(frames)}, torch::kFloat32).clone(),
          static_cast<int64_t>(rate)};
}

void write_wav(const std::filesystem::path& path, const torch::Tensor& samples, int64_t sample_rate) {
  auto s = samples.to(torch::kFloat32).clamp(-1.0, 1.0).contiguous();
  const auto n = static_cast<uint32_t>(s.numel());
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IOFailure("cannot write wav file " + path.string());
  }
  auto put32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  out.write("RIFF", 4);
  put32(36 + n * 2);
  out.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<uint32_t>(sample_rate));
  put32(static_cast<uint32_t>(sample_rate * 2));
  put16(2);
  put16(16);
  out.write("data", 4);
  put32(n * 2);
  const float* p = s.data_ptr<float>();
  for (uint32_t i = 0; i < n; ++i) {
    put16(static_cast<uint16_t>(static_cast<int16_t>(std::clamp<long>(std::lround(p[i] * 32768.0f), -32768, 32767))));
  }
}

}  // namespace viewcraft
