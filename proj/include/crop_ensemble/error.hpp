#pragma once

#include <stdexcept>
#include <string>

namespace crop_ensemble {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A crop region collapsed to zero extent after clamping.
class DegenerateCrop : public Error {
 public:
  DegenerateCrop(std::string box_name, const std::string& what)
      : Error(what), box_name_(std::move(box_name)) {}
  const std::string& box_name() const noexcept { return box_name_; }

 private:
  std::string box_name_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class InfeasibleSplit : public Error {
 public:
  InfeasibleSplit(std::string subject, const std::string& what)
      : Error(what), subject_(std::move(subject)) {}
  const std::string& subject() const noexcept { return subject_; }

 private:
  std::string subject_;
};

}  // namespace crop_ensemble
