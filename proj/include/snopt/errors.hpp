/*
 Copyright 2026 The snopt-kit Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace snopt {

// Every failure raised by the library derives from Error so callers can catch
// one type at the boundary (the CLI maps these onto exit codes).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

class NotSymmetric : public Error {
 public:
  using Error::Error;
};

class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

class SingularFactor : public Error {
 public:
  using Error::Error;
};

class MaxStepsExceeded : public Error {
 public:
  using Error::Error;
};

class NonFiniteState : public Error {
 public:
  using Error::Error;
};

class NonFiniteUpdate : public Error {
 public:
  using Error::Error;
};

class BadLabel : public Error {
 public:
  using Error::Error;
};

class BadInterval : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training aborted on a numeric failure; carries the iteration index.
class TrainingAborted : public Error {
 public:
  TrainingAborted(std::size_t iteration, const std::string& what)
      : Error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace snopt
