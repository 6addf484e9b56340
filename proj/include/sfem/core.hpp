#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sfem {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Contract violations (bad meshes, invalid configs, undersampled fits) throw
// subclasses of Error with a message naming the offending input.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class MeshError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class FitError : public Error {
public:
  using Error::Error;
};

class SolveError : public Error {
public:
  using Error::Error;
};

// Stencil directions on the locally refined lattice. The six nonzero offsets
// are exactly the edge directions of the once-refined reference triangle and
// stay fixed across levels; (i,j) indexing is aligned with the macro element's
// barycentric axes.
enum class Dir : int { C = 0, E = 1, W = 2, N = 3, S = 4, NW = 5, SE = 6 };

inline constexpr int kNumDirs = 7;

struct DirOffset {
  int di;
  int dj;
};

inline constexpr std::array<DirOffset, kNumDirs> kDirOffset = {{
    {0, 0},   // C
    {1, 0},   // E
    {-1, 0},  // W
    {0, 1},   // N
    {0, -1},  // S
    {-1, 1},  // NW
    {1, -1},  // SE
}};

inline constexpr std::array<Dir, 6> kOffDiagDirs = {Dir::E, Dir::W, Dir::N,
                                                    Dir::S, Dir::NW, Dir::SE};

inline constexpr Dir opposite(Dir d) {
  switch (d) {
    case Dir::C: return Dir::C;
    case Dir::E: return Dir::W;
    case Dir::W: return Dir::E;
    case Dir::N: return Dir::S;
    case Dir::S: return Dir::N;
    case Dir::NW: return Dir::SE;
    case Dir::SE: return Dir::NW;
  }
  return Dir::C;
}

inline constexpr DirOffset offset_of(Dir d) {
  return kDirOffset[static_cast<int>(d)];
}

inline const char* dir_name(Dir d) {
  static constexpr std::array<const char*, kNumDirs> names = {
      "C", "E", "W", "N", "S", "NW", "SE"};
  return names[static_cast<int>(d)];
}

// One stencil row: weights indexed by Dir.
struct StencilRow {
  std::array<double, kNumDirs> w{};

  double& operator[](Dir d) { return w[static_cast<int>(d)]; }
  double operator[](Dir d) const { return w[static_cast<int>(d)]; }
};

enum class Form { stiffness, mass };

}  // namespace sfem
