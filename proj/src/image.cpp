#include "gshead/image.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gshead {

double image_mse(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw std::runtime_error("image_mse: shape mismatch");
  double acc = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    double d = a.px[i] - b.px[i];
    acc += d * d;
  }
  return acc / double(a.px.size());
}

namespace {

const std::array<uint32_t, 256>& crc_table() {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t n = 0; n < 256; ++n) {
      uint32_t c = n;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[n] = c;
    }
    return t;
  }();
  return table;
}

uint32_t crc32(std::span<const uint8_t> data, uint32_t crc = 0) {
  crc ^= 0xFFFFFFFFu;
  for (uint8_t b : data) crc = crc_table()[(crc ^ b) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

uint32_t adler32(std::span<const uint8_t> data) {
  uint32_t a = 1, b = 0;
  for (uint8_t byte : data) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], std::span<const uint8_t> data) {
  put_be32(out, uint32_t(data.size()));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uint32_t crc = crc32({out.data() + start, out.size() - start});
  put_be32(out, crc);
}

constexpr uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

uint32_t get_be32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::vector<uint8_t> encode_png(const Image& img) {
  if (img.channels != 3) throw std::runtime_error("encode_png: only 3-channel images supported");
  if (img.height <= 0 || img.width <= 0) throw std::runtime_error("encode_png: empty image");

  // filter byte 0 per row, then raw RGB
  std::vector<uint8_t> raw;
  raw.reserve(size_t(img.height) * (size_t(img.width) * 3 + 1));
  for (int i = 0; i < img.height; ++i) {
    raw.push_back(0);
    for (int j = 0; j < img.width; ++j)
      for (int c = 0; c < 3; ++c) {
        double v = std::min(1.0, std::max(0.0, img.at(i, j, c)));
        raw.push_back(uint8_t(std::lround(v * 255.0)));
      }
  }

  // zlib stream with stored deflate blocks
  std::vector<uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  size_t pos = 0;
  while (pos < raw.size()) {
    size_t len = std::min<size_t>(65535, raw.size() - pos);
    bool final = pos + len == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(uint8_t(len & 0xFF));
    z.push_back(uint8_t(len >> 8));
    z.push_back(uint8_t(~len & 0xFF));
    z.push_back(uint8_t((~len >> 8) & 0xFF));
    z.insert(z.end(), raw.begin() + long(pos), raw.begin() + long(pos + len));
    pos += len;
  }
  uint32_t ad = adler32(raw);
  put_be32(z, ad);

  std::vector<uint8_t> out(kSignature, kSignature + 8);
  std::vector<uint8_t> ihdr;
  put_be32(ihdr, uint32_t(img.width));
  put_be32(ihdr, uint32_t(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

Image decode_png(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
    throw std::runtime_error("decode_png: not a PNG file");

  uint32_t width = 0, height = 0;
  int bit_depth = 0, color_type = -1;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    uint32_t len = get_be32(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) throw std::runtime_error("decode_png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const uint8_t* data = bytes.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw std::runtime_error("decode_png: bad IHDR");
      width = get_be32(data);
      height = get_be32(data + 4);
      bit_depth = data[8];
      color_type = data[9];
      if (data[12] != 0) throw std::runtime_error("decode_png: interlaced PNG not supported");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (width == 0 || height == 0) throw std::runtime_error("decode_png: missing IHDR");
  if (bit_depth != 8 || color_type != 2)
    throw std::runtime_error("decode_png: only 8-bit RGB PNGs are supported");
  if (idat.size() < 6) throw std::runtime_error("decode_png: missing image data");

  // zlib: stored deflate blocks only
  if ((idat[0] & 0x0F) != 8) throw std::runtime_error("decode_png: bad zlib header");
  if (idat[1] & 0x20) throw std::runtime_error("decode_png: preset dictionary not supported");
  std::vector<uint8_t> raw;
  size_t zp = 2;
  while (true) {
    if (zp >= idat.size()) throw std::runtime_error("decode_png: truncated deflate stream");
    uint8_t header = idat[zp++];
    if ((header >> 1) != 0)
      throw std::runtime_error(
          "decode_png: compressed deflate blocks not supported (reads PNGs written by this tool)");
    if (zp + 4 > idat.size()) throw std::runtime_error("decode_png: truncated stored block");
    uint32_t len = uint32_t(idat[zp]) | (uint32_t(idat[zp + 1]) << 8);
    uint32_t nlen = uint32_t(idat[zp + 2]) | (uint32_t(idat[zp + 3]) << 8);
    if ((len ^ 0xFFFF) != nlen) throw std::runtime_error("decode_png: corrupt stored block");
    zp += 4;
    if (zp + len > idat.size()) throw std::runtime_error("decode_png: truncated stored block");
    raw.insert(raw.end(), idat.begin() + long(zp), idat.begin() + long(zp + len));
    zp += len;
    if (header & 1) break;
  }
  if (zp + 4 <= idat.size()) {
    uint32_t ad = get_be32(idat.data() + zp);
    if (ad != adler32(raw)) throw std::runtime_error("decode_png: adler32 mismatch");
  }

  const size_t stride = size_t(width) * 3;
  if (raw.size() != (stride + 1) * height)
    throw std::runtime_error("decode_png: scanline data size mismatch");

  Image img(int(height), int(width), 3);
  std::vector<uint8_t> prev(stride, 0), cur(stride, 0);
  for (uint32_t i = 0; i < height; ++i) {
    const uint8_t* row = raw.data() + size_t(i) * (stride + 1);
    uint8_t filter = row[0];
    const uint8_t* src = row + 1;
    for (size_t x = 0; x < stride; ++x) {
      int a = x >= 3 ? cur[x - 3] : 0;
      int b = prev[x];
      int c = x >= 3 ? prev[x - 3] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw std::runtime_error("decode_png: unknown filter type");
      }
      cur[x] = uint8_t(v);
    }
    for (uint32_t j = 0; j < width; ++j)
      for (int c = 0; c < 3; ++c) img.at(int(i), int(j), c) = double(cur[j * 3 + c]) / 255.0;
    std::swap(prev, cur);
  }
  return img;
}

void write_png(const std::string& path, const Image& img) {
  auto bytes = encode_png(img);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_png: cannot open " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!os) throw std::runtime_error("write_png: write failed: " + path);
}

Image read_png(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_png: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace gshead
