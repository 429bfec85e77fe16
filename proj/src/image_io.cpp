#include "pfpn/image_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <jpeglib.h>
#include <zlib.h>

#include <csetjmp>

namespace pfpn {

namespace {

// ---- PNG plumbing ----

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t len,
                       std::uint32_t seed = 0) {
  return static_cast<std::uint32_t>(
      ::crc32(seed, reinterpret_cast<const Bytef*>(data),
              static_cast<uInt>(len)));
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32_be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32_be(out, crc32_of(out.data() + start, out.size() - start));
}

/// zlib container around uncompressed (stored) deflate blocks.
std::vector<std::uint8_t> zlib_stored(const std::vector<std::uint8_t>& raw) {
  std::vector<std::uint8_t> out;
  out.push_back(0x78);
  out.push_back(0x01);
  std::size_t pos = 0;
  do {
    const std::size_t n = std::min<std::size_t>(raw.size() - pos, 65535);
    const bool final = pos + n == raw.size();
    out.push_back(final ? 0x01 : 0x00);
    out.push_back(static_cast<std::uint8_t>(n & 0xff));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(~n & 0xff));
    out.push_back(static_cast<std::uint8_t>((~n >> 8) & 0xff));
    out.insert(out.end(), raw.begin() + pos, raw.begin() + pos + n);
    pos += n;
  } while (pos < raw.size());
  const auto adler = static_cast<std::uint32_t>(
      ::adler32(1, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uInt>(raw.size())));
  put_u32_be(out, adler);
  return out;
}

void write_png(const std::filesystem::path& path, const std::uint8_t* data,
               int width, int height, int channels) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("png write: empty image");
  }
  std::vector<std::uint8_t> file{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);                                  // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);              // gray / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  append_chunk(file, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + width * channels));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    const std::uint8_t* row = data + std::size_t(y) * width * channels;
    raw.insert(raw.end(), row, row + std::size_t(width) * channels);
  }
  append_chunk(file, "IDAT", zlib_stored(raw));
  append_chunk(file, "IEND", {});

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out.write(reinterpret_cast<const char*>(file.data()),
            static_cast<std::streamsize>(file.size()));
  if (!out) throw std::runtime_error("short write: " + path.string());
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

ImageU8 read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0) {
    throw std::runtime_error("not a PNG file: " + path.string());
  }
  std::size_t pos = 8;
  int width = 0, height = 0, bit_depth = 0, color_type = 0, interlace = 0;
  std::vector<std::uint8_t> idat;
  while (pos + 8 <= file.size()) {
    const std::uint32_t len = get_u32_be(&file[pos]);
    if (pos + 12 + len > file.size()) {
      throw std::runtime_error("truncated PNG: " + path.string());
    }
    const char* type = reinterpret_cast<const char*>(&file[pos + 4]);
    const std::uint8_t* data = &file[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      width = static_cast<int>(get_u32_be(data));
      height = static_cast<int>(get_u32_be(data + 4));
      bit_depth = data[8];
      color_type = data[9];
      interlace = data[12];
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0) {
    throw std::runtime_error("bad PNG header: " + path.string());
  }
  if (bit_depth != 8) {
    throw std::runtime_error("unsupported PNG bit depth " +
                             std::to_string(bit_depth) + ": " + path.string());
  }
  int src_ch;
  switch (color_type) {
    case 0: src_ch = 1; break;
    case 2: src_ch = 3; break;
    case 4: src_ch = 2; break;
    case 6: src_ch = 4; break;
    default:
      throw std::runtime_error("unsupported PNG color type " +
                               std::to_string(color_type) + ": " + path.string());
  }
  if (interlace != 0) {
    throw std::runtime_error("interlaced PNG not supported: " + path.string());
  }

  const std::size_t stride = std::size_t(width) * src_ch;
  std::vector<std::uint8_t> raw(std::size_t(height) * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (::uncompress(raw.data(), &raw_len, idat.data(),
                   static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size()) {
    throw std::runtime_error("corrupt PNG data: " + path.string());
  }

  std::vector<std::uint8_t> pixels(std::size_t(height) * stride);
  std::vector<std::uint8_t> prev(stride, 0);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[std::size_t(y) * (stride + 1)];
    const std::uint8_t* src = &raw[std::size_t(y) * (stride + 1) + 1];
    std::uint8_t* dst = &pixels[std::size_t(y) * stride];
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = x >= std::size_t(src_ch) ? dst[x - src_ch] : 0;
      const int b = prev[x];
      const int c = x >= std::size_t(src_ch) ? prev[x - src_ch] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default:
          throw std::runtime_error("bad PNG filter: " + path.string());
      }
      dst[x] = static_cast<std::uint8_t>(v);
    }
    std::copy(dst, dst + stride, prev.begin());
  }

  ImageU8 img;
  img.width = width;
  img.height = height;
  img.channels = src_ch == 1 || src_ch == 2 ? 1 : 3;
  img.pixels.resize(std::size_t(width) * height * img.channels);
  for (std::size_t i = 0, n = std::size_t(width) * height; i < n; ++i) {
    for (int c = 0; c < img.channels; ++c) {
      img.pixels[i * img.channels + c] = pixels[i * src_ch + c];
    }
  }
  return img;
}

// ---- JPEG plumbing ----

struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

ImageU8 read_jpeg(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  jpeg_decompress_struct cinfo;
  JpegErr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    throw std::runtime_error("JPEG decode failed (" + std::string(err.message) +
                             "): " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  ImageU8 img;
  img.width = static_cast<int>(cinfo.output_width);
  img.height = static_cast<int>(cinfo.output_height);
  img.channels = 3;
  img.pixels.resize(std::size_t(img.width) * img.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() +
                   std::size_t(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(f);
  return img;
}

}  // namespace

ImageU8 read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return read_jpeg(path);
  throw std::invalid_argument("unsupported image extension '" + ext +
                              "': " + path.string());
}

void write_png_gray(const std::filesystem::path& path,
                    const std::uint8_t* data, int width, int height) {
  write_png(path, data, width, height, 1);
}

void write_png_rgb(const std::filesystem::path& path, const std::uint8_t* data,
                   int width, int height) {
  write_png(path, data, width, height, 3);
}

}  // namespace pfpn
