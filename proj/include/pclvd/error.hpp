#pragma once

#include <stdexcept>
#include <string>

namespace pclvd {

/// Base class of every error raised by the library. The CLI maps the
/// subclasses onto exit codes (see tools/pclvd_main.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PreconditionError : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class StructuralError : public Error { public: using Error::Error; };
class CapacityError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

} // namespace pclvd
