#pragma once

#include "irnn/binary_io.hpp"
#include "irnn/cells.hpp"
#include "irnn/checkpoint.hpp"
#include "irnn/gradcheck.hpp"
#include "irnn/harness.hpp"
#include "irnn/init.hpp"
#include "irnn/ndcore.hpp"
#include "irnn/network.hpp"
#include "irnn/optim.hpp"
#include "irnn/tasks.hpp"
