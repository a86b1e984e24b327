// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cdcfm/analysis.hpp"
#include "cdcfm/checkpoint.hpp"
#include "cdcfm/config.hpp"
#include "cdcfm/coupling.hpp"
#include "cdcfm/error.hpp"
#include "cdcfm/io.hpp"
#include "cdcfm/model.hpp"
#include "cdcfm/oracle.hpp"
#include "cdcfm/pyramid.hpp"
#include "cdcfm/rng.hpp"
#include "cdcfm/rten.hpp"
#include "cdcfm/sampler.hpp"
#include "cdcfm/schedule.hpp"
#include "cdcfm/shapes.hpp"
#include "cdcfm/tensor.hpp"
#include "cdcfm/train.hpp"
