#pragma once

#include <stdexcept>
#include <string>

namespace ssvi {

// Failure categories. The CLI maps these onto its exit-code taxonomy.
enum class Errc {
  degenerate_sigma,
  nonpositive_variance,
  overflow,
  dimension_mismatch,
  tape_mismatch,
  budget_out_of_range,
  insufficient_candidates,
  empty_module,
  non_finite_loss,
  invalid_config,
  bad_magic,
  truncated_file,
  parse_error,
  schema_error,
  io_error,
  checkpoint_corrupt,
  empty_input,
  grid_invalid,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ssvi
