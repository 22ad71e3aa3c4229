# Copyright 2026 The dhog Authors
#
# Licensed under the Apache License, Version 2.0 (the "License"); you
# may not use this file except in compliance with the License.  You
# may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
# implied.  See the License for the specific language governing
# permissions and limitations under the License.

# Regenerates tests/data from the images bundled with scikit-image.
# Run from the repository root: python3 tools/make_fixtures.py
import os, numpy as np
from PIL import Image
from skimage import data, io, color, transform
d = os.path.dirname(data.__file__)
names = ['astronaut.png','camera.png','chelsea.png','coffee.png','coins.png','moon.png','text.png','page.png',
         'brick.png','grass.png','gravel.png','cell.png','rocket.jpg','retina.jpg','motorcycle_left.png',
         'hubble_deep_field.jpg','ihc.png','microaneurysms.png','clock_motion.png','horse.png']
out = 'tests/data/suite'
for i, n in enumerate(names):
    im = io.imread(os.path.join(d, n))
    if im.ndim == 3:
        im = color.rgb2gray(im[..., :3])
    im = im.astype(float)
    if im.max() > 1.5: im = im / 255.0
    h, w = im.shape
    s = min(h, w)
    im = im[(h-s)//2:(h-s)//2+s, (w-s)//2:(w-s)//2+s]
    im = transform.resize(im, (128,128), anti_aliasing=True)
    b = np.clip(np.round(im*255), 0, 255).astype(np.uint8)
    Image.fromarray(b, 'L').save(f'{out}/{i:02d}_{os.path.splitext(n)[0]}.pgm')
    print(n, b.std())
p = 'tests/data/png'
Image.fromarray(np.array([[[255,0,0]]*3]*2, np.uint8), 'RGB').save(f'{p}/red_3x2.png')
g = np.arange(0, 256, 16, dtype=np.uint8).reshape(4,4)
Image.fromarray(g, 'L').save(f'{p}/gray_ramp_4x4.png')


def write_adam7(path, a):
    # PIL cannot write interlaced PNG, so assemble the seven passes by hand.
    import struct, zlib
    def chunk(t, body):
        return struct.pack('>I', len(body)) + t + body + struct.pack('>I', zlib.crc32(t + body) & 0xffffffff)
    h, w = a.shape
    raw = b''
    for y0, x0, dy, dx in [(0,0,8,8),(0,4,8,8),(4,0,8,4),(0,2,4,4),(2,0,4,2),(0,1,2,2),(1,0,2,1)]:
        sub = a[y0::dy, x0::dx]
        if sub.size:
            raw += b''.join(b'\0' + r.tobytes() for r in sub)
    ihdr = struct.pack('>IIBBBBB', w, h, 8, 0, 0, 0, 1)
    with open(path, 'wb') as f:
        f.write(b'\x89PNG\r\n\x1a\n' + chunk(b'IHDR', ihdr) + chunk(b'IDAT', zlib.compress(raw)) + chunk(b'IEND', b''))


write_adam7(f'{p}/interlaced.png', g)
Image.fromarray(g.astype(np.uint16)*256).save(f'{p}/gray16.png')
print(Image.open(f'{p}/gray16.png').mode, Image.open(f'{p}/interlaced.png').info)
assert (np.array(Image.open(f'{p}/interlaced.png')) == g).all()

# Metric goldens from numpy / scikit-image, read back by tests/test_metrics.cpp.
import json
from skimage.metrics import structural_similarity
m = 'tests/data/metrics'
os.makedirs(m, exist_ok=True)
a = np.array(Image.open(f'{out}/00_astronaut.pgm'))
rng = np.random.default_rng(7)
b = np.clip(np.round(a + rng.normal(0, 12, a.shape)), 0, 255).astype(np.uint8)
c = np.array(Image.open(f'{out}/01_camera.pgm'))
for name, arr in [('a', a), ('b', b), ('c', c)]:
    Image.fromarray(arr, 'L').save(f'{m}/{name}.pgm')
golden = []
for x, y in [('a', 'b'), ('a', 'c'), ('b', 'c'), ('a', 'a')]:
    X = dict(a=a, b=b, c=c)[x] / 255.0
    Y = dict(a=a, b=b, c=c)[y] / 255.0
    j, _, _ = np.histogram2d(X.ravel(), Y.ravel(), bins=32, range=[[0, 1], [0, 1]])
    p = j / j.sum()
    px, py = p.sum(1), p.sum(0)
    nz = p > 0
    mi = float((p[nz] * np.log2(p[nz] / np.outer(px, py)[nz])).sum())
    golden.append(dict(a=x, b=y,
                       pearson=float(np.corrcoef(X.ravel(), Y.ravel())[0, 1]),
                       raw=float((X * Y).sum() / np.sqrt((X * X).sum() * (Y * Y).sum())),
                       mi=mi,
                       ssim=float(structural_similarity(X, Y, gaussian_weights=True, sigma=1.5,
                                                        use_sample_covariance=False, data_range=1.0))))
with open(f'{m}/golden.json', 'w') as f:
    json.dump(golden, f, indent=1)
