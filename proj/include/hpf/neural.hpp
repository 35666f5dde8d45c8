#pragma once

#include "hpf/neural/activation.hpp"
#include "hpf/neural/cells.hpp"
#include "hpf/neural/gradcheck.hpp"
#include "hpf/neural/model.hpp"
#include "hpf/neural/optimizer.hpp"
