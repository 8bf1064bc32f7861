#include "sacnn/data_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sacnn {

namespace {

void validate_record(const AnnotatedImage& record, const std::string& where) {
  const Shape s = record.image.shape();
  for (std::size_t i = 0; i < record.heads.size(); ++i) {
    const HeadPoint& p = record.heads[i];
    if (!(p.x >= 0.0 && p.x < s.w && p.y >= 0.0 && p.y < s.h)) {
      std::ostringstream msg;
      msg << where << ": head " << i << " at (" << p.x << ", " << p.y
          << ") outside " << s.w << "x" << s.h << " image";
      throw DataError(msg.str());
    }
  }
  for (double v : record.image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DataError(where + ": image values must lie in [0,1]");
    }
  }
}

// --- PGM ---------------------------------------------------------------

int pgm_next_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns the next integer.
  while (true) {
    const int ch = in.peek();
    if (ch == EOF) throw DataError("truncated PGM header");
    if (std::isspace(ch)) {
      in.get();
    } else if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw DataError("malformed PGM header");
  return value;
}

Tensor read_pgm(std::istream& in, const std::string& name) {
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5') throw DataError(name + ": not a binary PGM (P5)");
  const int width = pgm_next_token(in);
  const int height = pgm_next_token(in);
  const int maxval = pgm_next_token(in);
  if (width < 1 || height < 1) throw DataError(name + ": bad PGM dimensions");
  if (maxval < 1 || maxval > 255) {
    throw DataError(name + ": only 8-bit PGM images are supported (maxval " +
                    std::to_string(maxval) + ")");
  }
  in.get();  // single whitespace after maxval

  Tensor image({1, 1, height, width});
  std::vector<char> row(std::size_t(width));
  for (int y = 0; y < height; ++y) {
    in.read(row.data(), width);
    if (!in) throw DataError(name + ": truncated PGM pixel data");
    for (int x = 0; x < width; ++x) {
      image.at(0, 0, y, x) = double(std::uint8_t(row[std::size_t(x)])) / maxval;
    }
  }
  return image;
}

// --- PNG (via libpng) ----------------------------------------------------

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (file) std::fclose(file);
  }
};

Tensor read_png(const std::filesystem::path& path) {
  PngReadCloser c;
  c.file = std::fopen(path.string().c_str(), "rb");
  if (!c.file) throw DataError("cannot open " + path.string());

  c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!c.png) throw DataError("libpng init failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw DataError("libpng init failed");
  if (setjmp(png_jmpbuf(c.png))) {
    throw DataError(path.string() + ": PNG decode failed");
  }

  png_init_io(c.png, c.file);
  png_read_info(c.png, c.info);

  const png_uint_32 width = png_get_image_width(c.png, c.info);
  const png_uint_32 height = png_get_image_height(c.png, c.info);
  const png_byte color = png_get_color_type(c.png, c.info);
  const png_byte depth = png_get_bit_depth(c.png, c.info);

  if (depth == 16) png_set_strip_16(c.png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(c.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(c.png);
  if (png_get_valid(c.png, c.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(c.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(c.png);
  png_read_update_info(c.png, c.info);

  const png_size_t rowbytes = png_get_rowbytes(c.png, c.info);
  const int channels = png_get_channels(c.png, c.info);
  if (channels != 1 && channels != 3) {
    throw DataError(path.string() + ": unsupported PNG layout after expansion");
  }

  std::vector<png_byte> row(rowbytes);
  Tensor image({1, 1, int(height), int(width)});
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(c.png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < width; ++x) {
      double v;
      if (channels == 1) {
        v = row[x] / 255.0;
      } else {
        const double r = row[3 * x + 0], g = row[3 * x + 1], b = row[3 * x + 2];
        v = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
      }
      image.at(0, 0, int(y), int(x)) = std::min(v, 1.0);
    }
  }
  return image;
}

}  // namespace

Tensor read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  in.seekg(0);
  if (magic[0] == 'P' && magic[1] == '5') return read_pgm(in, path.string());
  if (std::uint8_t(magic[0]) == 0x89 && magic[1] == 'P') {
    in.close();
    return read_png(path);
  }
  throw DataError(path.string() + ": unsupported image format (want PGM P5 or PNG)");
}

void write_pgm8(const Tensor& image, const std::filesystem::path& path) {
  const Shape s = image.shape();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "P5\n" << s.w << " " << s.h << "\n255\n";
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      const double v = std::clamp(image.at(0, 0, y, x), 0.0, 1.0);
      out.put(char(std::uint8_t(std::lround(v * 255.0))));
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  const std::filesystem::path base = manifest.parent_path();

  Dataset dataset;
  dataset.provenance = manifest.string();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);

    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed JSON record: " + e.what());
    }
    if (!record.contains("id") || !record.contains("image") ||
        !record.contains("heads")) {
      throw DataError(where + ": record must have id, image and heads fields");
    }

    AnnotatedImage img;
    try {
      img.id = record.at("id").get<std::string>();
      const auto rel = record.at("image").get<std::string>();
      img.image = read_image(base / rel);
      for (const auto& pt : record.at("heads")) {
        if (!pt.is_array() || pt.size() != 2) {
          throw DataError(where + ": heads entries must be [x, y] pairs");
        }
        img.heads.push_back({pt[0].get<double>(), pt[1].get<double>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": bad record field: " + e.what());
    }
    validate_record(img, where);
    dataset.images.push_back(std::move(img));
  }
  if (dataset.images.empty()) {
    throw DataError(manifest.string() + ": manifest has no records");
  }
  return dataset;
}

Dataset synth_generate(std::uint64_t seed, int n_images, int height, int width,
                       int min_count, int max_count) {
  if (n_images < 1) throw ConfigError("synth_generate: need at least one image");
  if (height < 16 || width < 16) throw ConfigError("synth_generate: size must be >= 16");
  if (min_count < 0 || min_count > max_count) {
    throw ConfigError("synth_generate: need 0 <= min_count <= max_count");
  }
  if (max_count > height * width / 64) {
    throw ConfigError("synth_generate: max_count exceeds capacity " +
                      std::to_string(height * width / 64));
  }

  constexpr double kMinSeparation = 4.0;
  constexpr int kMaxTries = 1000;
  constexpr double kDiscRadius = 2.0;
  constexpr double kDip = 0.5;

  Rng rng(seed);
  Dataset dataset;
  {
    std::ostringstream prov;
    prov << "synth seed=" << seed << " n=" << n_images << " size=" << width << "x"
         << height << " count=[" << min_count << "," << max_count << "]";
    dataset.provenance = prov.str();
  }

  for (int i = 0; i < n_images; ++i) {
    AnnotatedImage img;
    {
      std::ostringstream id;
      id << "synth-" << seed << "-" << i;
      img.id = id.str();
    }

    const int count = rng.uniform_int(min_count, max_count);
    for (int h = 0; h < count; ++h) {
      bool placed = false;
      for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
        // keep a 2 px margin so each disc's center region is drawn
        const HeadPoint cand{2.0 + rng.uniform() * (width - 5),
                             2.0 + rng.uniform() * (height - 5)};
        bool ok = true;
        for (const HeadPoint& other : img.heads) {
          const double dx = cand.x - other.x, dy = cand.y - other.y;
          if (dx * dx + dy * dy < kMinSeparation * kMinSeparation) {
            ok = false;
            break;
          }
        }
        if (ok) {
          img.heads.push_back(cand);
          placed = true;
        }
      }
      if (!placed) {
        throw DataError("synth_generate: cannot place head " + std::to_string(h) +
                        " of image " + img.id + " with min separation 4");
      }
    }

    img.image = Tensor({1, 1, height, width});
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        img.image.at(0, 0, y, x) = 0.85 + 0.1 * (rng.uniform() - 0.5);
      }
    }
    for (const HeadPoint& p : img.heads) {
      const int y0 = std::max(0, int(std::floor(p.y - kDiscRadius)));
      const int y1 = std::min(height - 1, int(std::ceil(p.y + kDiscRadius)));
      const int x0 = std::max(0, int(std::floor(p.x - kDiscRadius)));
      const int x1 = std::min(width - 1, int(std::ceil(p.x + kDiscRadius)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double dx = x - p.x, dy = y - p.y;
          if (dx * dx + dy * dy <= kDiscRadius * kDiscRadius) {
            double& v = img.image.at(0, 0, y, x);
            v = std::max(v - kDip, 0.0);
          }
        }
      }
    }
    validate_record(img, img.id);
    dataset.images.push_back(std::move(img));
  }
  return dataset;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir,
                   bool force) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path manifest = dir / "manifest.jsonl";
  if (!force && std::filesystem::exists(manifest)) {
    throw DataError(manifest.string() + " exists; pass force to overwrite");
  }

  std::ofstream out(manifest);
  if (!out) throw DataError("cannot open " + manifest.string() + " for writing");
  for (const AnnotatedImage& img : dataset.images) {
    const std::string file = img.id + ".pgm";
    write_pgm8(img.image, dir / file);
    nlohmann::json heads = nlohmann::json::array();
    for (const HeadPoint& p : img.heads) heads.push_back({p.x, p.y});
    nlohmann::json record = {{"id", img.id}, {"image", file}, {"heads", heads}};
    out << record.dump() << "\n";
  }
  if (!out) throw DataError("failed writing " + manifest.string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  return load_dataset(dir / "manifest.jsonl");
}

}  // namespace sacnn
