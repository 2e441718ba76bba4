#include "ssvi/random.hpp"

#include <sstream>

#include "ssvi/error.hpp"

namespace ssvi {

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void deserialize_rng(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  Rng restored;
  is >> restored;
  if (is.fail()) throw Error(Errc::checkpoint_corrupt, "unreadable RNG state");
  rng = restored;
}

}  // namespace ssvi
