#include "viewcraft/image_io.hpp"

#include <cctype>
#include <fstream>
#include <vector>

#include <torch/torch.h>

#include "viewcraft/errors.hpp"

namespace viewcraft {

namespace {

int64_t read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) {
    throw IOFailure("malformed PNM header in " + path.string());
  }
  int64_t v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  // c is the single whitespace byte that ends the token.
  return v;
}

}  // namespace

torch::Tensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IOFailure("cannot open image " + path.string());
  }
  char magic[2] = {0, 0};
  in.read(magic, 2);
  int64_t channels = 0;
  if (magic[0] == 'P' && magic[1] == '6') {
    channels = 3;
  } else if (magic[0] == 'P' && magic[1] == '5') {
    channels = 1;
  } else {
    throw IOFailure("not a binary PPM/PGM file: " + path.string());
  }
  const int64_t w = read_header_int(in, path);
  const int64_t h = read_header_int(in, path);
  const int64_t maxval = read_header_int(in, path);
  if (maxval != 255 || w <= 0 || h <= 0) {
    throw IOFailure("only 8-bit PNM images are supported: " + path.string());
  }
  std::vector<uint8_t> buf(static_cast<size_t>(w * h * channels));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw IOFailure("truncated image data in " + path.string());
  }
  auto hwc = torch::from_blob(buf.data(), {h, w, channels}, torch::kUInt8);
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

torch::Tensor to_uint8(const torch::Tensor& image) {
  if (image.scalar_type() == torch::kUInt8) return image;
  return image.to(torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
}

void write_pnm(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || (image.size(0) != 1 && image.size(0) != 3)) {
    throw ShapeMismatch("write_pnm expects a 1 x H x W or 3 x H x W image");
  }
  auto hwc = to_uint8(image).permute({1, 2, 0}).contiguous();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IOFailure("cannot write image " + path.string());
  }
  out << (image.size(0) == 3 ? "P6" : "P5") << "\n"
      << image.size(2) << " " << image.size(1) << "\n255\n";
  out.write(static_cast<const char*>(hwc.data_ptr()), hwc.numel());
  if (!out) {
    throw IOFailure("failed writing image " + path.string());
  }
}

LabeledImages read_cifar10_batch(const std::filesystem::path& path, int64_t limit) {
  constexpr int64_t kRecord = 1 + 3 * 32 * 32;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IOFailure("cannot open CIFAR-10 batch " + path.string());
  }
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() % kRecord != 0) {
    throw IOFailure("CIFAR-10 batch size is not a multiple of 3073 bytes: " + path.string());
  }
  int64_t n = static_cast<int64_t>(buf.size()) / kRecord;
  if (limit >= 0) n = std::min(n, limit);
  auto raw = torch::from_blob(buf.data(), {n, kRecord}, torch::kUInt8);
  LabeledImages out;
  out.labels = raw.select(1, 0).to(torch::kInt64).clone();
  out.images =
      raw.narrow(1, 1, kRecord - 1).reshape({n, 3, 32, 32}).to(torch::kFloat32).div(255.0);
  return out;
}

}  // namespace viewcraft
