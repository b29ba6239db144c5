#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "transnet/data.hpp"
#include "transnet/error.hpp"

namespace transnet {

namespace {

constexpr std::string_view kRawMagic = "TNT1";

std::uint32_t read_u32le(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

Tensor decode_rawf32(std::span<const std::uint8_t> b, std::string_view source) {
  if (b.size() < 16) {
    throw FormatError(fmt::format("{}: RAWF32 header truncated: expected 16 bytes, got {}", source,
                                  b.size()));
  }
  const std::size_t c = read_u32le(b, 4), h = read_u32le(b, 8), w = read_u32le(b, 12);
  if (c == 0 || h == 0 || w == 0) {
    throw FormatError(fmt::format("{}: RAWF32 header at byte 4 has a zero extent {}x{}x{}", source,
                                  c, h, w));
  }
  const std::size_t expected = 16 + 4 * c * h * w;
  if (b.size() != expected) {
    throw FormatError(fmt::format("{}: RAWF32 payload: expected {} bytes, got {}", source,
                                  expected, b.size()));
  }
  Tensor t(Shape4{1, c, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) {
    const float f = std::bit_cast<float>(read_u32le(b, 16 + 4 * i));
    if (!std::isfinite(f)) {
      throw FormatError(fmt::format("{}: non-finite value at byte {}", source, 16 + 4 * i));
    }
    t[i] = static_cast<double>(f);
  }
  return t;
}

// Parses one whitespace-delimited unsigned integer in a PNM header, skipping
// comments. Advances pos past the token.
std::size_t pnm_token(std::span<const std::uint8_t> b, std::size_t& pos, std::string_view source) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  std::size_t value = 0;
  while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
    value = value * 10 + (b[pos] - '0');
    if (value > (1u << 24)) break;
    ++pos;
  }
  if (pos == start) {
    throw FormatError(fmt::format("{}: malformed PNM header at byte {}", source, start));
  }
  return value;
}

Tensor decode_pnm(std::span<const std::uint8_t> b, std::string_view source) {
  const std::size_t channels = b[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const std::size_t w = pnm_token(b, pos, source);
  const std::size_t h = pnm_token(b, pos, source);
  const std::size_t maxval_at = pos;
  const std::size_t maxval = pnm_token(b, pos, source);
  if (maxval != 255) {
    throw FormatError(fmt::format("{}: maxval {} near byte {} unsupported (only 255)", source,
                                  maxval, maxval_at));
  }
  if (w == 0 || h == 0) throw FormatError(fmt::format("{}: zero image extent", source));
  if (pos >= b.size() || !std::isspace(b[pos])) {
    throw FormatError(fmt::format("{}: missing separator after header at byte {}", source, pos));
  }
  ++pos;
  const std::size_t expected = pos + channels * w * h;
  if (b.size() < expected) {
    throw FormatError(fmt::format("{}: truncated pixel data: expected {} bytes, got {}", source,
                                  expected, b.size()));
  }
  Tensor t(Shape4{1, channels, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        t.at(0, c, y, x) = static_cast<double>(b[pos + (y * w + x) * channels + c]) / 255.0;
      }
    }
  }
  return t;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(fmt::format("short write to '{}'", path.string()));
}

}  // namespace

Tensor decode_patch(std::span<const std::uint8_t> bytes, std::string_view source) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kRawMagic.data(), 4) == 0) {
    return decode_rawf32(bytes, source);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return decode_pnm(bytes, source);
  }
  throw FormatError(fmt::format("{}: unrecognized magic at byte 0 (expected P5, P6 or TNT1)",
                                source));
}

Tensor load_patch(const std::filesystem::path& path, std::optional<Shape4> expect) {
  const auto bytes = read_file(path);
  Tensor t = decode_patch(bytes, path.string());
  if (expect) {
    const auto& s = t.shape();
    if (s.c != expect->c || s.h != expect->h || s.w != expect->w) {
      throw ShapeError(fmt::format("{}: patch is {}x{}x{}, expected {}x{}x{}", path.string(), s.c,
                                   s.h, s.w, expect->c, expect->h, expect->w));
    }
  }
  return t;
}

std::vector<std::uint8_t> encode_rawf32(const Tensor& x) {
  const auto& s = x.shape();
  std::vector<std::uint8_t> out(kRawMagic.begin(), kRawMagic.end());
  put_u32le(out, static_cast<std::uint32_t>(s.n * s.c));
  put_u32le(out, static_cast<std::uint32_t>(s.h));
  put_u32le(out, static_cast<std::uint32_t>(s.w));
  out.reserve(16 + 4 * x.size());
  for (double v : x.values()) put_u32le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

void write_rawf32(const std::filesystem::path& path, const Tensor& x) {
  write_file(path, encode_rawf32(x));
}

std::vector<std::uint8_t> encode_pnm(const Tensor& x) {
  const auto& s = x.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) {
    throw ShapeError(fmt::format("PNM export needs a (1, 1|3, H, W) tensor, got {}", s.to_string()));
  }
  const std::string header = fmt::format("P{}\n{} {}\n255\n", s.c == 1 ? 5 : 6, s.w, s.h);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t xx = 0; xx < s.w; ++xx) {
      for (std::size_t c = 0; c < s.c; ++c) {
        const double v = std::clamp(x.at(0, c, y, xx), 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
    }
  }
  return out;
}

void write_pnm(const std::filesystem::path& path, const Tensor& x) {
  write_file(path, encode_pnm(x));
}

ResampleMode parse_resample_mode(std::string_view text) {
  if (text == "crop" || text == "center-crop") return ResampleMode::kCenterCrop;
  if (text == "tile" || text == "tile-grid") return ResampleMode::kTileGrid;
  if (text == "resize" || text == "bilinear" || text == "bilinear-resize") {
    return ResampleMode::kBilinear;
  }
  throw ConfigError(fmt::format("unknown resample mode '{}' (crop, tile, resize)", text));
}

namespace {

Tensor window(const Tensor& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  const auto& s = x.shape();
  Tensor out(Shape4{1, s.c, h, w});
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) out.at(0, c, y, xx) = x.at(0, c, top + y, left + xx);
    }
  }
  return out;
}

double source_coord(std::size_t i, std::size_t out, std::size_t in) {
  if (out == 1) return static_cast<double>(in - 1) / 2.0;
  return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

}  // namespace

std::vector<Tensor> resample_patch(const Tensor& x, std::size_t out_h, std::size_t out_w,
                                   ResampleMode mode) {
  const auto& s = x.shape();
  if (s.n != 1) throw ShapeError("resample_patch expects a single (1, C, H, W) patch");
  if (out_h == 0 || out_w == 0) throw ParameterError("resample_patch: output extent is zero");
  switch (mode) {
    case ResampleMode::kCenterCrop: {
      if (out_h > s.h || out_w > s.w) {
        throw ParameterError(fmt::format("center crop {}x{} larger than input {}x{}", out_h, out_w,
                                         s.h, s.w));
      }
      return {window(x, (s.h - out_h) / 2, (s.w - out_w) / 2, out_h, out_w)};
    }
    case ResampleMode::kTileGrid: {
      if (out_h > s.h || out_w > s.w) {
        throw ParameterError(fmt::format("tile {}x{} larger than input {}x{}", out_h, out_w, s.h,
                                         s.w));
      }
      std::vector<Tensor> tiles;
      for (std::size_t top = 0; top + out_h <= s.h; top += out_h) {
        for (std::size_t left = 0; left + out_w <= s.w; left += out_w) {
          tiles.push_back(window(x, top, left, out_h, out_w));
        }
      }
      return tiles;
    }
    case ResampleMode::kBilinear: {
      Tensor out(Shape4{1, s.c, out_h, out_w});
      for (std::size_t y = 0; y < out_h; ++y) {
        const double sy = source_coord(y, out_h, s.h);
        const auto y0 = static_cast<std::size_t>(std::floor(sy));
        const std::size_t y1 = std::min(y0 + 1, s.h - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t xx = 0; xx < out_w; ++xx) {
          const double sx = source_coord(xx, out_w, s.w);
          const auto x0 = static_cast<std::size_t>(std::floor(sx));
          const std::size_t x1 = std::min(x0 + 1, s.w - 1);
          const double fx = sx - static_cast<double>(x0);
          for (std::size_t c = 0; c < s.c; ++c) {
            const double top = x.at(0, c, y0, x0) * (1 - fx) + x.at(0, c, y0, x1) * fx;
            const double bottom = x.at(0, c, y1, x0) * (1 - fx) + x.at(0, c, y1, x1) * fx;
            out.at(0, c, y, xx) = top * (1 - fy) + bottom * fy;
          }
        }
      }
      return {out};
    }
  }
  throw ParameterError("unknown resample mode");
}

Dataset load_dataset(const Manifest& manifest, std::optional<Shape4> target, ResampleMode mode) {
  Dataset d;
  for (std::size_t r = 0; r < manifest.rows.size(); ++r) {
    const auto& row = manifest.rows[r];
    Tensor t = load_patch(manifest.resolve(row));
    std::vector<Tensor> pieces;
    if (target && (t.shape().h != target->h || t.shape().w != target->w ||
                   mode == ResampleMode::kTileGrid)) {
      pieces = resample_patch(t, target->h, target->w, mode);
    } else {
      pieces.push_back(std::move(t));
    }
    for (auto& p : pieces) {
      if (target && p.shape().c != target->c) {
        throw DataError(fmt::format("{}: patch has {} channels, expected {}", row.path,
                                    p.shape().c, target->c));
      }
      d.samples.push_back(std::move(p));
      d.labels.push_back(row.label);
      d.groups.push_back(row.group);
      d.sources.push_back(r);
    }
  }
  d.sample_shape();
  return d;
}

}  // namespace transnet
