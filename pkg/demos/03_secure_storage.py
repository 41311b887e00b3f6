"""
Secure storage
==============

Keys derive from the hardware unique key; objects are sealed with AES-GCM
before the supplicant writes them to disk.
"""

from teekv import boot
from teekv.errors import CorruptObject
from teekv.secure_storage import derive_ssk, derive_tsk, object_name
from teekv.storage_ta import STORAGE_BENCH_UUID

emu = boot(device_name="demo-store", seed=3)
print("HUK source:", emu.storage.huk.source)
ssk = derive_ssk(emu.storage.huk)
print("SSK:", ssk.hex())
print("TSK of the storage TA:", derive_tsk(ssk, STORAGE_BENCH_UUID).hex())

store = emu.storage.bind(STORAGE_BENCH_UUID)
obj = store.create_object(b"diary")
store.write_chunk(obj, b"dear diary, nothing happened today")
store.close_object(obj)

# what the normal world sees
path = emu.store_root / object_name(STORAGE_BENCH_UUID, b"diary")
blob = path.read_bytes()
print(path.name, len(blob), "bytes on disk, plaintext visible:", b"diary," in blob)

obj = store.open_object(b"diary")
print("read back:", store.read_chunk(obj, 1024))
store.close_object(obj)

# flip one bit and try again
blob = bytearray(blob)
blob[-20] ^= 0x01
path.write_bytes(blob)
try:
    store.open_object(b"diary")
except CorruptObject as exc:
    print("tampered object rejected:", exc)

emu.close()
