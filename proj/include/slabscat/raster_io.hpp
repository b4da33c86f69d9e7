#pragma once
// Raster CSV interchange for coefficient fields. Format:
//   # slabscat-raster nx=<int> nz=<int> field=<eps|tau>
//   <nz lines of nx comma-separated decimal values, row-major in j>

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "slabscat/format.hpp"
#include "slabscat/structure.hpp"

namespace slabscat {

inline void write_raster(std::ostream& os, const Eigen::ArrayXd& values, int nx, int nz,
                         const std::string& field_name) {
  if (values.size() != static_cast<Eigen::Index>(nx) * nz)
    throw std::invalid_argument("write_raster: size mismatch");
  os << "# slabscat-raster nx=" << nx << " nz=" << nz << " field=" << field_name << "\n";
  for (int j = 0; j < nz; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (i) os << ",";
      os << num17(values(j * nx + i));
    }
    os << "\n";
  }
}

inline void write_raster_file(const std::string& path, const Eigen::ArrayXd& values, int nx, int nz,
                              const std::string& field_name) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_raster: cannot open " + path);
  write_raster(f, values, nx, nz, field_name);
}

struct RasterData {
  int nx = 0, nz = 0;
  std::string field;  // "eps" or "tau"
  Eigen::ArrayXd values;
};

inline RasterData read_raster(std::istream& is, const std::string& origin = "<stream>") {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error(origin + ": empty raster file");
  RasterData d;
  {
    std::istringstream hs(header);
    std::string hash, tag, kv;
    hs >> hash >> tag;
    if (hash != "#" || tag != "slabscat-raster")
      throw std::runtime_error(origin + ": missing '# slabscat-raster' header");
    while (hs >> kv) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::runtime_error(origin + ": bad header token " + kv);
      std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      if (key == "nx") d.nx = std::stoi(val);
      else if (key == "nz") d.nz = std::stoi(val);
      else if (key == "field") d.field = val;
      else throw std::runtime_error(origin + ": unknown header key " + key);
    }
  }
  if (d.nx <= 0 || d.nz <= 0) throw std::runtime_error(origin + ": bad raster dimensions");
  if (d.field != "eps" && d.field != "tau")
    throw std::runtime_error(origin + ": field must be eps or tau");
  d.values.resize(static_cast<Eigen::Index>(d.nx) * d.nz);
  for (int j = 0; j < d.nz; ++j) {
    std::string line;
    if (!std::getline(is, line))
      throw std::runtime_error(origin + ": expected " + std::to_string(d.nz) + " data rows");
    std::istringstream ls(line);
    std::string cell;
    for (int i = 0; i < d.nx; ++i) {
      if (!std::getline(ls, cell, ','))
        throw std::runtime_error(origin + ": row " + std::to_string(j) + " has fewer than nx values");
      d.values(j * d.nx + i) = std::stod(cell);
    }
    if (std::getline(ls, cell, ','))
      throw std::runtime_error(origin + ": row " + std::to_string(j) + " has more than nx values");
  }
  return d;
}

inline RasterData read_raster_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_raster: cannot open " + path);
  return read_raster(f, path);
}

}  // namespace slabscat
