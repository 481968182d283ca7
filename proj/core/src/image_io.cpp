#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pdls/errors.hpp"
#include "pdls/imaging.hpp"

namespace pdls {

namespace {

// Skips whitespace and '#' comments between PPM header tokens.
std::string next_ppm_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(char(c));
    c = in.get();
  }
  return tok;
}

bool ends_with(const std::string& s, const char* suffix) {
  const std::size_t n = std::strlen(suffix);
  if (s.size() < n) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (std::tolower(s[s.size() - n + i]) != suffix[i]) return false;
  return true;
}

} // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path);
  if (next_ppm_token(in) != "P6") throw DataError("not a binary PPM (P6): " + path);
  std::size_t w = 0;
  std::size_t h = 0;
  long maxval = 0;
  try {
    w = std::stoul(next_ppm_token(in));
    h = std::stoul(next_ppm_token(in));
    maxval = std::stol(next_ppm_token(in));
  } catch (const std::exception&) {
    throw DataError("malformed PPM header: " + path);
  }
  if (w == 0 || h == 0 || maxval != 255)
    throw DataError("unsupported PPM geometry or maxval in " + path);
  Image img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          std::streamsize(img.pixels.size()));
  if (std::size_t(in.gcount()) != img.pixels.size())
    throw DataError("truncated PPM pixel data: " + path);
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            std::streamsize(img.pixels.size()));
  if (!out) throw DataError("failed writing PPM: " + path);
}

Image read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw DataError("cannot open image: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("libpng initialization failed");
  }

  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  std::size_t width = 0;
  std::size_t height = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw DataError("failed to decode PNG: " + path);
  }

  png_init_io(png, fp);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  pixels.resize(width * height * 3);
  rows.resize(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = pixels.data() + y * width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  Image img(width, height);
  img.pixels = std::move(pixels);
  return img;
}

void write_png(const std::string& path, const Image& img) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot write image: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("failed to encode PNG: " + path);
  }

  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

SlideImage load_slide(const std::string& path) {
  SlideImage slide;
  if (ends_with(path, ".png")) {
    slide.image = read_png(path);
  } else if (ends_with(path, ".ppm")) {
    slide.image = read_ppm(path);
  } else {
    throw DataError("unsupported slide format (expected .png or .ppm): " + path);
  }
  if (slide.image.width < 256 || slide.image.height < 256)
    throw DataError("slide smaller than 256x256: " + path);

  std::ifstream meta(path + ".meta");
  if (meta) {
    std::string line;
    while (std::getline(meta, line)) {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 1);
      if (key == "magnification") {
        slide.magnification = value;
      } else if (key == "um_per_pixel") {
        try {
          slide.um_per_pixel = std::stod(value);
        } catch (const std::exception&) {
          throw DataError("bad um_per_pixel in sidecar: " + path + ".meta");
        }
      }
    }
  }
  return slide;
}

void save_slide(const std::string& path, const SlideImage& slide) {
  if (ends_with(path, ".png")) {
    write_png(path, slide.image);
  } else {
    write_ppm(path, slide.image);
  }
  std::ofstream meta(path + ".meta", std::ios::trunc);
  if (!meta) throw DataError("cannot write sidecar: " + path + ".meta");
  meta << "magnification=" << slide.magnification << "\n";
  std::ostringstream um;
  um << slide.um_per_pixel;
  meta << "um_per_pixel=" << um.str() << "\n";
}

} // namespace pdls
