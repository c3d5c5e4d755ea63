__int64 __fastcall fn_parity(unsigned int a1)
{
  unsigned int v2; // [rsp+4h]

  v2 = a1;
  v2 = v2 ^ (v2 >> 16);
  v2 = v2 ^ (v2 >> 8);
  v2 = v2 ^ (v2 >> 4);
  v2 = v2 ^ (v2 >> 2);
  v2 = v2 ^ (v2 >> 1);
  return v2 & 1;
}
