#include "hpf/errors.hpp"

namespace hpf {

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::format: return 3;
    case ErrorKind::domain: return 4;
    case ErrorKind::convergence: return 5;
    case ErrorKind::numeric: return 6;
    case ErrorKind::io: return 7;
  }
  return 1;
}

}  // namespace hpf
