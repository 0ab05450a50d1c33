#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "qglut/error.hpp"
#include "qglut/lut.hpp"

namespace qglut {

void write_cube(std::ostream& out, const Lut3D& lut, const std::string& title) {
  out << "TITLE \"" << title << "\"\n";
  out << "LUT_3D_SIZE " << lut.dim << "\n";
  out << "DOMAIN_MIN 0.0 0.0 0.0\n";
  out << "DOMAIN_MAX 1.0 1.0 1.0\n";
  out << std::setprecision(17);
  for (std::size_t n = 0; n < lut.node_count(); ++n) {
    out << lut.grid[n * 3] << ' ' << lut.grid[n * 3 + 1] << ' '
        << lut.grid[n * 3 + 2] << '\n';
  }
}

void write_cube(const std::filesystem::path& path, const Lut3D& lut,
                const std::string& title) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  write_cube(out, lut, title);
}

Lut3D read_cube(std::istream& in) {
  Lut3D lut;
  std::string line;
  std::size_t row = 0;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line.substr(first));
    std::string head;
    ls >> head;
    if (head == "TITLE") continue;
    if (head == "LUT_3D_SIZE") {
      ls >> lut.dim;
      if (!ls || lut.dim < 2) fail(ErrorCode::InvalidSize, "bad LUT_3D_SIZE");
      lut.grid.assign(lut.node_count() * 3, 0.0);
      continue;
    }
    if (head == "LUT_1D_SIZE") {
      fail(ErrorCode::InvalidArgument, "1D .cube tables are not supported");
    }
    if (head == "DOMAIN_MIN" || head == "DOMAIN_MAX") {
      double lo[3];
      ls >> lo[0] >> lo[1] >> lo[2];
      double want = head == "DOMAIN_MIN" ? 0.0 : 1.0;
      for (double v : lo) {
        if (!ls || v != want) {
          fail(ErrorCode::InvalidArgument, "only the [0,1] cube domain is supported");
        }
      }
      continue;
    }
    if (lut.dim == 0) {
      fail(ErrorCode::InvalidArgument,
           "data row before LUT_3D_SIZE at line " + std::to_string(line_no));
    }
    if (row >= lut.node_count()) {
      fail(ErrorCode::InvalidArgument, "too many rows in .cube table");
    }
    std::istringstream vs(line.substr(first));
    double r, g, b;
    vs >> r >> g >> b;
    if (!vs || !std::isfinite(r) || !std::isfinite(g) || !std::isfinite(b)) {
      fail(ErrorCode::InvalidArgument, "malformed row at line " + std::to_string(line_no));
    }
    lut.grid[row * 3] = r;
    lut.grid[row * 3 + 1] = g;
    lut.grid[row * 3 + 2] = b;
    ++row;
  }
  if (lut.dim == 0 || row != lut.node_count()) {
    fail(ErrorCode::InvalidArgument, "incomplete .cube table");
  }
  return lut;
}

Lut3D read_cube(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return read_cube(in);
}

}  // namespace qglut
