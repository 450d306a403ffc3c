#pragma once

// UMXA array files, CSV tables and PGM images.
//
// UMXA layout (little-endian):
//   "UMXA" | uint32 dtype | uint32 rank | uint64 dims[rank] | row-major payload
// with dtype 1 = float64, 2 = complex128 (re, im pairs), 3 = uint8.

#include "umx/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace umx::io {

enum class DType : std::uint32_t { kFloat64 = 1, kComplex128 = 2, kUInt8 = 3 };

struct Array {
  DType dtype = DType::kFloat64;
  std::vector<std::size_t> dims;
  std::vector<double> real;  // float64 payload, or interleaved re/im for complex128
  std::vector<std::uint8_t> bytes;

  static Array real_array(std::vector<std::size_t> dims, std::vector<double> values);
  static Array complex_array(std::vector<std::size_t> dims, const std::vector<cplx>& values);
  static Array byte_array(std::vector<std::size_t> dims, std::vector<std::uint8_t> values);

  std::size_t element_count() const;
  const std::vector<double>& real_values() const;
  std::vector<cplx> complex_values() const;
  const std::vector<std::uint8_t>& byte_values() const;
};

void write_umxa(const std::filesystem::path& path, const Array& array);
Array read_umxa(const std::filesystem::path& path);

Array from_vector(const RealVector& v);
Array from_vector(const ComplexVector& v);
RealVector to_real_vector(const Array& a);
ComplexVector to_complex_vector(const Array& a);

/// Binary grayscale image (P5, maxval 255), rows top to bottom.
void write_pgm(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& pixels);

/// RFC 4180 field quoting.
std::string csv_field(const std::string& text);
/// Shortest round-trippable decimal text of a double (%.17g).
std::string csv_number(double value);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(std::vector<std::string> fields);
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Parses RFC 4180 text back into rows (used to audit exported tables).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace umx::io
