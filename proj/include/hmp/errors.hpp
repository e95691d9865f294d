#ifndef HMP_ERRORS_HPP_
#define HMP_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace hmp {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Metric failed the positive-definiteness check at a queried point.
class MetricDegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Geodesic integration blew up or failed its step-doubling consistency check.
class GeodesicEscapeError : public Error {
 public:
  using Error::Error;
};

/// Switching-surface gradient vanished where the surface was queried.
class DegenerateSurfaceError : public Error {
 public:
  using Error::Error;
};

/// Trajectory met a switching surface tangentially; it is not continued.
class TransversalityError : public Error {
 public:
  TransversalityError(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// State became non-finite during integration.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, double last_good_time)
      : Error(what), last_good_time_(last_good_time) {}
  double last_good_time() const { return last_good_time_; }

 private:
  double last_good_time_;
};

/// A scheduled switching surface was never reached before the final time.
class IncompleteScheduleError : public Error {
 public:
  IncompleteScheduleError(const std::string& what, int events_reached)
      : Error(what), events_reached_(events_reached) {}
  int events_reached() const { return events_reached_; }

 private:
  int events_reached_;
};

/// Controllability Gramian too ill-conditioned for minimum-energy steering.
class UncontrollableSegmentError : public Error {
 public:
  using Error::Error;
};

/// Line search failed to find descent; carries the best iterate's cost.
class SolverStalledError : public Error {
 public:
  SolverStalledError(const std::string& what, double best_cost)
      : Error(what), best_cost_(best_cost) {}
  double best_cost() const { return best_cost_; }

 private:
  double best_cost_;
};

/// Configuration file missing, malformed, or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hmp

#endif  // HMP_ERRORS_HPP_
