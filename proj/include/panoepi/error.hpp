#pragma once

#include <stdexcept>
#include <string>

namespace panoepi {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Input outside the documented domain of an operation (pixel out of the
// grid, sample point outside the plane extents, non-positive tolerance...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(what) {}
};

// Geometry for which the requested quantity is undefined: zero baseline
// between two views, a point sitting on a camera center, and so on.
class DegenerateGeometryError : public Error {
 public:
  explicit DegenerateGeometryError(const std::string& what) : Error(what) {}
};

// Mismatched matrix/vector dimensions between related arguments.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

// File parsing / serialization failures.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace panoepi
