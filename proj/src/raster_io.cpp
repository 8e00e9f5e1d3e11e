#include "raster_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "pvst/error.hpp"
#include "pvst/image.hpp"

namespace pvst::detail {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Lives on the heap so its contents stay well-defined across png_longjmp.
struct PngState {
  std::string message;
  ErrorKind failure = ErrorKind::kMalformedHeader;
};

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngState*>(png_get_error_ptr(png));
  if (state && state->message.empty()) state->message = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

bool has_extension(const std::filesystem::path& path, const char* ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

Raster8 read_png(const std::filesystem::path& path, bool keep_gray) {
  const std::string name = path.string();
  FilePtr file(std::fopen(name.c_str(), "rb"));
  if (!file) throw Error(ErrorKind::kMissingFile, "cannot open", name);

  png_byte signature[8] = {};
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw Error(ErrorKind::kMalformedHeader, "not a PNG file", name);
  }

  auto state = std::make_unique<PngState>();
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, state.get(), png_error_fn,
                                           png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::kIo, "libpng initialisation failed", name);
  }

  Raster8 out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(state->failure, state->message, name);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth != 8 && !(color_type == PNG_COLOR_TYPE_PALETTE && bit_depth < 8)) {
    state->failure = ErrorKind::kUnsupportedBitDepth;
    state->message = "expected 8 bits per channel, got " + std::to_string(bit_depth);
    png_error(png, state->message.c_str());
  }
  const bool has_alpha = (color_type & PNG_COLOR_MASK_ALPHA) != 0;
  if (keep_gray && has_alpha) {
    state->failure = ErrorKind::kUnsupportedFormat;
    state->message = "expected a single-channel or RGB image without alpha";
    png_error(png, state->message.c_str());
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (has_alpha) png_set_strip_alpha(png);
  const bool gray = color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA;
  if (gray && !keep_gray) png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bytes.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) {
    rows[y] = out.bytes.data() + static_cast<std::size_t>(y) * out.width * out.channels;
  }
  state->failure = ErrorKind::kTruncated;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::filesystem::path& path, const Raster8& raster) {
  const std::string name = path.string();
  FilePtr file(std::fopen(name.c_str(), "wb"));
  if (!file) throw Error(ErrorKind::kIo, "cannot open for writing", name);

  auto state = std::make_unique<PngState>();
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, state.get(), png_error_fn,
                                            png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::kIo, "libpng initialisation failed", name);
  }
  std::vector<png_bytep> rows(raster.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::kIo, state->message, name);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, raster.width, raster.height, 8,
               raster.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < raster.height; ++y) {
    rows[y] = const_cast<png_bytep>(raster.bytes.data() +
                                    static_cast<std::size_t>(y) * raster.width * raster.channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
bool ppm_token(std::istream& in, std::string& token) {
  token.clear();
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (!std::isspace(ch)) break;
  }
  if (ch == EOF) return false;
  do {
    token.push_back(static_cast<char>(ch));
  } while ((ch = in.get()) != EOF && !std::isspace(ch));
  return true;
}

int ppm_int(std::istream& in, const std::string& name) {
  std::string token;
  if (!ppm_token(in, token) || token.empty() ||
      !std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw Error(ErrorKind::kMalformedHeader, "bad PPM header field", name);
  }
  try {
    return std::stoi(token);
  } catch (const std::exception&) {
    throw Error(ErrorKind::kMalformedHeader, "PPM header field out of range", name);
  }
}

}  // namespace

Raster8 read_ppm(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot open", name);
  std::string magic;
  if (!ppm_token(in, magic) || magic != "P6") {
    throw Error(ErrorKind::kMalformedHeader, "expected binary PPM (P6)", name);
  }
  Raster8 out;
  out.width = ppm_int(in, name);
  out.height = ppm_int(in, name);
  const int maxval = ppm_int(in, name);
  if (out.width < 1 || out.height < 1) {
    throw Error(ErrorKind::kMalformedHeader, "non-positive PPM dimensions", name);
  }
  if (maxval != 255) {
    throw Error(ErrorKind::kUnsupportedBitDepth, "expected maxval 255", name);
  }
  out.channels = 3;
  out.bytes.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  in.read(reinterpret_cast<char*>(out.bytes.data()), static_cast<std::streamsize>(out.bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(out.bytes.size())) {
    throw Error(ErrorKind::kTruncated, "PPM pixel data ended early", name);
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Raster8& raster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open for writing", path.string());
  out << "P6\n" << raster.width << ' ' << raster.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.bytes.data()),
            static_cast<std::streamsize>(raster.bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed", path.string());
}

}  // namespace pvst::detail

namespace pvst {

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::kMissingFile, "no such file", path.string());
  }
  detail::Raster8 raster;
  if (detail::has_extension(path, ".ppm")) {
    raster = detail::read_ppm(path);
  } else if (detail::has_extension(path, ".png")) {
    raster = detail::read_png(path, false);
  } else {
    throw Error(ErrorKind::kUnsupportedFormat, "expected .png or .ppm", path.string());
  }
  std::vector<double> data(raster.bytes.size());
  std::transform(raster.bytes.begin(), raster.bytes.end(), data.begin(),
                 [](std::uint8_t b) { return b / 255.0; });
  return Image(raster.height, raster.width, std::move(data));
}

void save_image(const Image& img, const std::filesystem::path& path) {
  detail::Raster8 raster{img.height(), img.width(), 3, {}};
  raster.bytes.resize(img.size());
  auto src = img.values();
  std::transform(src.begin(), src.end(), raster.bytes.begin(), quantize);
  if (detail::has_extension(path, ".ppm")) {
    detail::write_ppm(path, raster);
  } else if (detail::has_extension(path, ".png")) {
    detail::write_png(path, raster);
  } else {
    throw Error(ErrorKind::kUnsupportedFormat, "expected .png or .ppm", path.string());
  }
}

}  // namespace pvst
