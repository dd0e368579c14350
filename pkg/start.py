#!/usr/bin/env python3
"""
Quick startup script for the random kernel lab
"""

import os
import subprocess
import sys

from config import Config


def main():
    print("🚀 Random Wavelet Kernel Lab - Quick Start")
    print("=" * 60)

    # Check if the wavelet table exists
    if not os.path.exists(Config.MEYER_TABLE_PATH):
        print("📊 Building Meyer wavelet table...")
        subprocess.run([sys.executable, 'build_meyer_table.py'])

    # Start the application
    print("🌐 Starting experiment API...")
    print("📍 Open: http://localhost:5000/api/experiments")
    print("⌨️  Command line: python cli.py --help")
    print("-" * 60)

    subprocess.run([sys.executable, 'app.py'])


if __name__ == '__main__':
    main()
