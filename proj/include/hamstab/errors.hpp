#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace hamstab {

// Base for every error raised by the library. CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidDimension : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class NotSymplectic : public Error {
public:
    NotSymplectic(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

class IllConditioned : public Error {
public:
    using Error::Error;
};

enum class InstabilityKind { off_circle, non_semi_simple };

// Raised when an operation requires a stable symplectic matrix.
class Unstable : public Error {
public:
    Unstable(const std::string& what, InstabilityKind kind, std::complex<double> eigenvalue)
        : Error(what), kind_(kind), eigenvalue_(eigenvalue) {}
    InstabilityKind kind() const { return kind_; }
    std::complex<double> eigenvalue() const { return eigenvalue_; }

private:
    InstabilityKind kind_;
    std::complex<double> eigenvalue_;
};

// A unit-circle eigenvector with vanishing Krein amplitude; only possible on
// a non-semi-simple eigenvalue.
class KreinDegenerate : public Error {
public:
    KreinDegenerate(const std::string& what, std::complex<double> eigenvalue)
        : Error(what), eigenvalue_(eigenvalue) {}
    std::complex<double> eigenvalue() const { return eigenvalue_; }

private:
    std::complex<double> eigenvalue_;
};

class IntegrationError : public Error {
public:
    using Error::Error;
};

// The envelope matrix w lost invertibility between t_lo and t_hi.
class EnvelopeSingular : public Error {
public:
    EnvelopeSingular(const std::string& what, double t_lo, double t_hi)
        : Error(what), t_lo_(t_lo), t_hi_(t_hi) {}
    double t_lo() const { return t_lo_; }
    double t_hi() const { return t_hi_; }

private:
    double t_lo_;
    double t_hi_;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line, std::string field)
        : Error(what), line_(line), field_(std::move(field)) {}
    int line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    int line_;
    std::string field_;
};

}  // namespace hamstab
