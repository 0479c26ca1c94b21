#include "convit/netpbm.hpp"

#include <fstream>

#include "convit/errors.hpp"

namespace convit {
namespace {

// Read one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
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
  if (tok.empty()) throw ParseError(path + ": truncated netpbm header");
  return tok;
}

int parse_dim(const std::string& tok, const std::string& path, const char* what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size() || v < 1) throw std::invalid_argument("range");
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ": bad " + what + " '" + tok + "'");
  }
}

void read_header(std::istream& in, const std::string& path, const char* magic, int& w, int& h) {
  const std::string m = next_token(in, path);
  if (m != magic)
    throw ParseError(path + ": bad magic '" + m + "', expected " + magic);
  w = parse_dim(next_token(in, path), path, "width");
  h = parse_dim(next_token(in, path), path, "height");
  const int maxval = parse_dim(next_token(in, path), path, "maxval");
  if (maxval != 255) throw ParseError(path + ": unsupported maxval " + std::to_string(maxval));
  // The single whitespace byte after maxval was already consumed by tokenizing.
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  Image img;
  read_header(in, path, "P6", img.width, img.height);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
  img.pixels.resize(n);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw ParseError(path + ": truncated pixel payload");
  return img;
}

void write_ppm(const Image& img, const std::string& path) {
  if (img.width < 1 || img.height < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    throw ContractError("write_ppm: image dims/payload inconsistent");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError(path + ": write failed");
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  GrayImage img;
  read_header(in, path, "P5", img.width, img.height);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  img.pixels.resize(n);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw ParseError(path + ": truncated pixel payload");
  return img;
}

void write_pgm(const GrayImage& img, const std::string& path) {
  if (img.width < 1 || img.height < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
    throw ContractError("write_pgm: image dims/payload inconsistent");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace convit
