#pragma once

#include <stdexcept>
#include <string>

namespace misanthrope {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A level index beyond the cap of a tabulated kernel.
class OutOfRange : public Error {
 public:
  using Error::Error;
};

// Kernel violates a structural requirement (c(k,0)=0 where a ratio is needed, ...).
class DegenerateKernel : public Error {
 public:
  using Error::Error;
};

class SupercriticalDensity : public Error {
 public:
  SupercriticalDensity(double requested, double rho_c);
  double requested() const noexcept { return requested_; }
  double rho_c() const noexcept { return rho_c_; }

 private:
  double requested_;
  double rho_c_;
};

// Rejection sampler gave up; carries the measured acceptance rate.
class SamplingExhausted : public Error {
 public:
  SamplingExhausted(const std::string& what, double acceptance_rate)
      : Error(what), acceptance_rate_(acceptance_rate) {}
  double acceptance_rate() const noexcept { return acceptance_rate_; }

 private:
  double acceptance_rate_;
};

}  // namespace misanthrope
