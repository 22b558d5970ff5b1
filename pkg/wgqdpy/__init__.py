# -*- coding: utf-8 -*-

"""Waveguide-integrated quantum-dot source simulation toolkit"""

__version__ = "0.1.0"
