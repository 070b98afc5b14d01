#pragma once

// Result persistence: CSV emission with round-trip-exact floating point
// formatting, crash-safe file creation (write to `<name>.partial`, rename on
// commit), and a binary cache for eigendecompositions.
//
// CSV dialect: comma delimiter, '.' decimal separator, header row, 17
// significant digits (lossless for IEEE binary64).  Vector-valued cells are
// semicolon-joined so rows stay flat.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmtlab/spectral.hpp"

namespace rmtlab {

static_assert(std::endian::native == std::endian::little,
              "binary spectrum cache assumes a little-endian host");

// %.17g: shortest fixed-precision form that round-trips any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline std::string join_semicolon(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

inline std::string join_semicolon_u64(const std::vector<std::uint64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(v[i]);
  }
  return out;
}

// Writes to `path + ".partial"`; the final name appears only on commit(), so
// an interrupted run never leaves a complete-looking file behind.
class AtomicFile {
 public:
  explicit AtomicFile(std::filesystem::path path, bool binary = false)
      : final_path_(std::move(path)), partial_path_(final_path_) {
    partial_path_ += ".partial";
    stream_.open(partial_path_,
                 binary ? std::ios::out | std::ios::binary | std::ios::trunc
                        : std::ios::out | std::ios::trunc);
    if (!stream_)
      throw std::runtime_error("cannot open for writing: " + partial_path_.string());
  }
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;
  ~AtomicFile() {
    if (stream_.is_open()) stream_.close();  // uncommitted: leave the .partial
  }

  std::ostream& stream() { return stream_; }

  void commit() {
    stream_.flush();
    if (!stream_) throw std::runtime_error("write failed: " + partial_path_.string());
    stream_.close();
    std::filesystem::rename(partial_path_, final_path_);
    committed_ = true;
  }

  bool committed() const { return committed_; }
  const std::filesystem::path& path() const { return final_path_; }

 private:
  std::filesystem::path final_path_;
  std::filesystem::path partial_path_;
  std::ofstream stream_;
  bool committed_ = false;
};

// Minimal CSV emitter over an AtomicFile.  Cells are written verbatim; the
// helpers above produce all numeric content, so no quoting is ever needed.
class CsvFile {
 public:
  explicit CsvFile(std::filesystem::path path) : file_(std::move(path)) {}

  void row(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    line += '\n';
    file_.stream() << line;
  }

  void commit() { file_.commit(); }
  const std::filesystem::path& path() const { return file_.path(); }

 private:
  AtomicFile file_;
};

// ----------------------------------------------------------------------------
// Binary spectrum cache.
//
// Layout (little endian):
//   8 bytes  magic "RMTSPEC1"
//   u64      n
//   u64      seed
//   u64      flags (bit 0: eigenvectors present)
//   f64      residual_norm
//   n   f64  eigenvalues (ascending)
//   n*n f64  eigenvectors, column-major (only when flagged)

namespace detail {

inline constexpr char kSpectrumMagic[8] = {'R', 'M', 'T', 'S', 'P', 'E', 'C', '1'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("spectrum cache: truncated file");
}

}  // namespace detail

inline void save_spectrum(const std::filesystem::path& path, const Spectrum& s) {
  AtomicFile file(path, /*binary=*/true);
  std::ostream& os = file.stream();
  os.write(detail::kSpectrumMagic, sizeof(detail::kSpectrumMagic));
  detail::write_pod(os, static_cast<std::uint64_t>(s.n));
  detail::write_pod(os, s.seed);
  detail::write_pod(os, static_cast<std::uint64_t>(s.has_vectors() ? 1 : 0));
  detail::write_pod(os, s.residual_norm);
  os.write(reinterpret_cast<const char*>(s.eigenvalues.data()),
           static_cast<std::streamsize>(sizeof(double)) * s.n);
  if (s.has_vectors())
    os.write(reinterpret_cast<const char*>(s.vectors.data()),
             static_cast<std::streamsize>(sizeof(double)) * s.n * s.n);
  file.commit();
}

inline Spectrum load_spectrum(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::in | std::ios::binary);
  if (!is) throw std::runtime_error("spectrum cache: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, detail::kSpectrumMagic))
    throw std::runtime_error("spectrum cache: bad magic in " + path.string());
  std::uint64_t n = 0, seed = 0, flags = 0;
  double residual = 0.0;
  detail::read_pod(is, n);
  detail::read_pod(is, seed);
  detail::read_pod(is, flags);
  detail::read_pod(is, residual);
  if (n == 0 || n > (1u << 20))
    throw std::runtime_error("spectrum cache: implausible dimension in " + path.string());
  Spectrum s;
  s.n = static_cast<int>(n);
  s.seed = seed;
  s.residual_norm = residual;
  s.eigenvalues.resize(static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(s.eigenvalues.data()),
          static_cast<std::streamsize>(sizeof(double) * n));
  if (!is) throw std::runtime_error("spectrum cache: truncated file " + path.string());
  if (flags & 1u) {
    s.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    is.read(reinterpret_cast<char*>(s.vectors.data()),
            static_cast<std::streamsize>(sizeof(double) * n * n));
    if (!is) throw std::runtime_error("spectrum cache: truncated file " + path.string());
  }
  return s;
}

}  // namespace rmtlab
