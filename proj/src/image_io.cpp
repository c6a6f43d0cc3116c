#include "ulre/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ulre {

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Next whitespace-delimited PGM header token, skipping '#' comments.
std::string header_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw FormatError(path.string() + ": truncated PGM header");
  return tok;
}

std::size_t parse_dim(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size() || v <= 0) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad PGM header value '" + s + "'");
  }
}

}  // namespace

Image quantize8(const Image& img) {
  Image out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = to_byte(img[i]) / 255.0;
  return out;
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  if (img.rank() != 2) throw std::invalid_argument("PGM needs a rank-2 image");
  auto out = open_out(path);
  out << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  std::vector<char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = static_cast<char>(to_byte(img[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (header_token(in, path) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  const std::size_t w = parse_dim(header_token(in, path), path);
  const std::size_t h = parse_dim(header_token(in, path), path);
  if (header_token(in, path) != "255") throw FormatError(path.string() + ": PGM maxval must be 255");
  std::vector<unsigned char> bytes(w * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw FormatError(path.string() + ": truncated PGM payload");
  Image img = Image::matrix(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = bytes[i] / 255.0;
  return img;
}

void write_float_image(const std::filesystem::path& path, const Image& img) {
  if (img.rank() != 2) throw std::invalid_argument("float image needs rank 2");
  auto out = open_out(path);
  out << "ULRIMG v1 " << img.rows() << ' ' << img.cols() << '\n';
  for (double v : img.values()) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out.write(reinterpret_cast<const char*>(&bits), 4);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Image read_float_image(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header");
  std::istringstream hs(line);
  std::string magic, version;
  long h = 0, w = 0;
  if (!(hs >> magic >> version >> h >> w) || magic != "ULRIMG" || version != "v1" || h <= 0 || w <= 0)
    throw FormatError(path.string() + ": bad header '" + line + "'");
  Image img = Image::matrix(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  for (std::size_t i = 0; i < img.size(); ++i) {
    std::uint32_t bits;
    if (!in.read(reinterpret_cast<char*>(&bits), 4)) throw FormatError(path.string() + ": truncated payload");
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    img[i] = std::bit_cast<float>(bits);
  }
  return img;
}

}  // namespace ulre
