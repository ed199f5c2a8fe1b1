#include "dscl/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace dscl {

namespace {

// next whitespace-delimited token, skipping '#' comment lines
bool next_token(std::istream& is, std::string& tok) {
  tok.clear();
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (!std::isspace(ch)) break;
  }
  if (ch == EOF) return false;
  do {
    tok.push_back(char(ch));
    ch = is.get();
  } while (ch != EOF && !std::isspace(ch));
  return true;
}

int parse_int(const std::string& tok, const std::string& path) {
  try {
    size_t pos = 0;
    int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError("netpbm: malformed header in " + path);
  }
}

}  // namespace

TensorF read_netpbm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("netpbm: cannot open " + path);
  std::string tok;
  if (!next_token(is, tok)) throw DataError("netpbm: empty file " + path);
  int channels;
  if (tok == "P5")
    channels = 1;
  else if (tok == "P6")
    channels = 3;
  else
    throw DataError("netpbm: unsupported magic '" + tok + "' in " + path);
  if (!next_token(is, tok)) throw DataError("netpbm: truncated header " + path);
  const int w = parse_int(tok, path);
  if (!next_token(is, tok)) throw DataError("netpbm: truncated header " + path);
  const int h = parse_int(tok, path);
  if (!next_token(is, tok)) throw DataError("netpbm: truncated header " + path);
  const int maxval = parse_int(tok, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw DataError("netpbm: bad dimensions or maxval in " + path);
  // the single whitespace after maxval was consumed by next_token

  const int bytes_per_sample = maxval > 255 ? 2 : 1;
  const size_t nsamples = size_t(w) * size_t(h) * size_t(channels);
  std::vector<unsigned char> raw(nsamples * size_t(bytes_per_sample));
  if (!is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size())))
    throw DataError("netpbm: truncated pixel data in " + path);

  TensorF out({h, w, channels});
  const float inv = 1.0f / float(maxval);
  for (size_t i = 0; i < nsamples; ++i) {
    unsigned v;
    if (bytes_per_sample == 2)
      v = (unsigned(raw[2 * i]) << 8) | unsigned(raw[2 * i + 1]);  // big-endian
    else
      v = raw[i];
    out[i] = float(v) * inv;
  }
  return out;
}

void write_ppm8(const std::string& path, const TensorF& image) {
  if (image.rank() != 3 || image.dim(2) != 3)
    throw DimError("write_ppm8: H x W x 3 image required");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_ppm8: cannot open " + path);
  os << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  for (size_t i = 0; i < image.size(); ++i) {
    const float v = std::min(std::max(image[i], 0.0f), 1.0f);
    os.put(char(int(std::lround(v * 255.0f))));
  }
  if (!os) throw DataError("write_ppm8: write failed for " + path);
}

void write_pgm16(const std::string& path, const TensorF& map) {
  if (map.rank() != 3 || map.dim(2) != 1)
    throw DimError("write_pgm16: H x W x 1 map required");
  float mx = 0.0f;
  for (size_t i = 0; i < map.size(); ++i) mx = std::max(mx, map[i]);
  const float scale = mx > 0.0f ? 65535.0f / mx : 0.0f;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_pgm16: cannot open " + path);
  os << "P5\n" << map.dim(1) << " " << map.dim(0) << "\n65535\n";
  for (size_t i = 0; i < map.size(); ++i) {
    const float v = std::max(map[i], 0.0f) * scale;
    const unsigned q = unsigned(std::min(std::lround(v), 65535l));
    os.put(char((q >> 8) & 0xff));
    os.put(char(q & 0xff));
  }
  if (!os) throw DataError("write_pgm16: write failed for " + path);
}

}  // namespace dscl
