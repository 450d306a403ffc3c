#include "umx/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little, "UMXA readers assume a little-endian host");

namespace umx::io {

namespace {

constexpr char kMagic[4] = {'U', 'M', 'X', 'A'};

std::size_t product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw std::runtime_error("UMXA: truncated header in " + path.string());
  return value;
}

}  // namespace

Array Array::real_array(std::vector<std::size_t> dims, std::vector<double> values) {
  if (product(dims) != values.size()) throw std::invalid_argument("Array: dims do not match value count");
  Array a;
  a.dtype = DType::kFloat64;
  a.dims = std::move(dims);
  a.real = std::move(values);
  return a;
}

Array Array::complex_array(std::vector<std::size_t> dims, const std::vector<cplx>& values) {
  if (product(dims) != values.size()) throw std::invalid_argument("Array: dims do not match value count");
  Array a;
  a.dtype = DType::kComplex128;
  a.dims = std::move(dims);
  a.real.resize(2 * values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    a.real[2 * i] = values[i].real();
    a.real[2 * i + 1] = values[i].imag();
  }
  return a;
}

Array Array::byte_array(std::vector<std::size_t> dims, std::vector<std::uint8_t> values) {
  if (product(dims) != values.size()) throw std::invalid_argument("Array: dims do not match value count");
  Array a;
  a.dtype = DType::kUInt8;
  a.dims = std::move(dims);
  a.bytes = std::move(values);
  return a;
}

std::size_t Array::element_count() const { return product(dims); }

const std::vector<double>& Array::real_values() const {
  if (dtype != DType::kFloat64) throw std::runtime_error("Array: not a float64 array");
  return real;
}

std::vector<cplx> Array::complex_values() const {
  if (dtype != DType::kComplex128) throw std::runtime_error("Array: not a complex128 array");
  std::vector<cplx> out(real.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {real[2 * i], real[2 * i + 1]};
  return out;
}

const std::vector<std::uint8_t>& Array::byte_values() const {
  if (dtype != DType::kUInt8) throw std::runtime_error("Array: not a uint8 array");
  return bytes;
}

void write_umxa(const std::filesystem::path& path, const Array& array) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("UMXA: cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(array.dtype));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(array.dims.size()));
  for (std::size_t d : array.dims) put<std::uint64_t>(os, d);
  if (array.dtype == DType::kUInt8)
    os.write(reinterpret_cast<const char*>(array.bytes.data()), static_cast<std::streamsize>(array.bytes.size()));
  else
    os.write(reinterpret_cast<const char*>(array.real.data()),
             static_cast<std::streamsize>(array.real.size() * sizeof(double)));
  if (!os) throw std::runtime_error("UMXA: write failed for " + path.string());
}

Array read_umxa(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("UMXA: cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("UMXA: bad magic in " + path.string());
  Array a;
  const auto dtype = get<std::uint32_t>(is, path);
  if (dtype < 1 || dtype > 3) throw std::runtime_error("UMXA: unknown dtype in " + path.string());
  a.dtype = static_cast<DType>(dtype);
  const auto rank = get<std::uint32_t>(is, path);
  if (rank > 8) throw std::runtime_error("UMXA: implausible rank in " + path.string());
  for (std::uint32_t k = 0; k < rank; ++k) a.dims.push_back(get<std::uint64_t>(is, path));
  const std::size_t n = product(a.dims);
  if (a.dtype == DType::kUInt8) {
    a.bytes.resize(n);
    is.read(reinterpret_cast<char*>(a.bytes.data()), static_cast<std::streamsize>(n));
  } else {
    a.real.resize(a.dtype == DType::kComplex128 ? 2 * n : n);
    is.read(reinterpret_cast<char*>(a.real.data()), static_cast<std::streamsize>(a.real.size() * sizeof(double)));
  }
  if (!is) throw std::runtime_error("UMXA: truncated payload in " + path.string());
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("UMXA: trailing bytes in " + path.string());
  return a;
}

Array from_vector(const RealVector& v) {
  return Array::real_array({static_cast<std::size_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()));
}

Array from_vector(const ComplexVector& v) {
  return Array::complex_array({static_cast<std::size_t>(v.size())}, std::vector<cplx>(v.data(), v.data() + v.size()));
}

RealVector to_real_vector(const Array& a) {
  const auto& vals = a.real_values();
  return Eigen::Map<const RealVector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

ComplexVector to_complex_vector(const Array& a) {
  const auto vals = a.complex_values();
  return Eigen::Map<const ComplexVector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

void write_pgm(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& pixels) {
  if (width <= 0 || height <= 0 || pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw std::invalid_argument("write_pgm: pixel buffer does not match image size");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path.string());
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvWriter::add_row(std::vector<std::string> fields) {
  if (fields.size() != header_.size()) throw std::invalid_argument("CsvWriter: row width differs from header");
  rows_.push_back(std::move(fields));
}

std::string CsvWriter::str() const {
  std::string out;
  auto line = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += csv_field(fields[i]);
    }
    out += "\r\n";
  };
  line(header_);
  for (const auto& row : rows_) line(row);
  return out;
}

void CsvWriter::write(const std::filesystem::path& path) const { write_text(path, str()); }

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      field_started = false;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw std::runtime_error("parse_csv: unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace umx::io
