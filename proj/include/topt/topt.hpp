#pragma once

#include "auglag.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "fem.hpp"
#include "levelset.hpp"
#include "mesh.hpp"
#include "optimizer.hpp"
#include "output.hpp"
#include "problem.hpp"
#include "sensitivity.hpp"
