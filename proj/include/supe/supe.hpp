#pragma once

#include "supe/experiment.hpp"
#include "supe/gradcheck.hpp"
