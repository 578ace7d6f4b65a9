// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rastar Authors
#pragma once

#include "rastar/alignment.hpp"
#include "rastar/astar.hpp"
#include "rastar/backend.hpp"
#include "rastar/correction.hpp"
#include "rastar/dataset.hpp"
#include "rastar/error.hpp"
#include "rastar/metrics.hpp"
#include "rastar/ner.hpp"
#include "rastar/parallel.hpp"
#include "rastar/phonetics.hpp"
#include "rastar/repository.hpp"
#include "rastar/utf8.hpp"
